// Sobol' indices of the g-function from aMR-PC coefficients, against the
// analytic values, for growing QMC training sets.
//
//   demo_gfunction [a1,a2,...]     (default 0,1,4.5,9,99)

#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "amrpc/amrpc.hpp"

using namespace amrpc;

int main(int argc, char** argv) {
  std::vector<double> a{0.0, 1.0, 4.5, 9.0, 99.0};
  if (argc > 1) {
    a.clear();
    std::stringstream ss(argv[1]);
    for (std::string tok; std::getline(ss, tok, ',');) {
      const auto v = parse_double(tok);
      if (!v) {
        std::fprintf(stderr, "not a number: %s\n", tok.c_str());
        return 2;
      }
      a.push_back(*v);
    }
  }

  try {
    const auto model = g_function(a);
    const auto& exact = *model.closed_form;
    const std::size_t M = a.size();

    for (int Nr : {0, 1}) {
      std::printf("\nNr=%d No=2\n%8s", Nr, "n");
      for (std::size_t i = 0; i < M; ++i) std::printf("   S_%zu    ST_%zu ", i + 1, i + 1);
      std::printf("\n");
      for (std::size_t n : {512u, 2048u, 8192u, 16384u}) {
        const auto m = fit(model.training_set(qmc_design(model.space, n)), Nr, 2, 1.0);
        const auto r = analyze(m);
        std::printf("%8zu", n);
        for (std::size_t i = 0; i < M; ++i) std::printf("  %.4f  %.4f", r.first[i].values[0], r.total[i].values[0]);
        std::printf("\n");
      }
    }
    std::printf("%8s", "exact");
    for (std::size_t i = 0; i < M; ++i) std::printf("  %.4f  %.4f", exact.first[i], exact.total[i]);
    std::printf("\n");
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.exit_code();
  }
  return 0;
}
