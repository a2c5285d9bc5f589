#pragma once

#include "amrpc/errors.hpp"
#include "amrpc/distributions.hpp"
#include "amrpc/qmc.hpp"
#include "amrpc/polybasis.hpp"
#include "amrpc/multires.hpp"
#include "amrpc/surrogate.hpp"
#include "amrpc/gsa.hpp"
#include "amrpc/metrics.hpp"
#include "amrpc/benchmarks.hpp"
#include "amrpc/io.hpp"
#include "amrpc/config.hpp"
