// amrpc: sample -> (external solver | bench) -> fit -> analyze -> metrics -> export
//
// Every subcommand reads the optional --config JSON first; flags override it.
// Exit codes: 0 ok, 2 configuration error, 3 data error, 4 numerical failure.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "amrpc/amrpc.hpp"

using namespace amrpc;
namespace fs = std::filesystem;

namespace {

struct Overrides {
  std::string config;
  std::optional<std::size_t> n;
  std::optional<std::string> kind;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> skip;
  std::optional<int> nr;
  std::optional<int> no;
  std::optional<double> q;
  std::optional<double> rcond;
  std::optional<double> var_floor;
  std::optional<std::string> quantiles;
  std::optional<std::string> design;
  std::optional<std::string> outputs;
  std::optional<std::string> model;
  std::optional<std::string> report;
  std::optional<std::string> reference;
  std::optional<std::string> test_design;
  std::optional<std::string> test_outputs;
  std::optional<std::string> metrics;
  std::optional<std::string> export_dir;
};

template <class T>
void set_if(const std::optional<T>& v, T& out) {
  if (v) out = *v;
}

RunConfig resolve(const Overrides& o) {
  RunConfig c = o.config.empty() ? RunConfig{} : load_config(o.config);
  set_if(o.n, c.design.n);
  set_if(o.kind, c.design.kind);
  set_if(o.seed, c.design.seed);
  set_if(o.skip, c.design.skip);
  set_if(o.nr, c.surrogate.nr);
  set_if(o.no, c.surrogate.no);
  set_if(o.q, c.surrogate.q);
  set_if(o.rcond, c.surrogate.rcond);
  set_if(o.var_floor, c.surrogate.var_floor);
  set_if(o.quantiles, c.surrogate.quantiles);
  set_if(o.design, c.paths.design);
  set_if(o.outputs, c.paths.outputs);
  set_if(o.model, c.paths.model);
  set_if(o.report, c.paths.report);
  set_if(o.reference, c.paths.reference);
  set_if(o.test_design, c.paths.test_design);
  set_if(o.test_outputs, c.paths.test_outputs);
  set_if(o.metrics, c.paths.metrics);
  set_if(o.export_dir, c.paths.export_dir);
  c.validate();
  return c;
}

const std::string& need_path(const std::string& path, const char* what) {
  if (path.empty()) throw ConfigError(std::string("no ") + what + " path given (config paths or flag)");
  return path;
}

void warn(const std::string& msg) { std::cerr << "warning: " << msg << "\n"; }

DesignMatrix make_design(const RunConfig& c, const ParameterSpace& space) {
  if (c.design.n == 0) warn("n = 0, writing a header-only design");
  return c.design.kind == "mc" ? mc_design(space, c.design.n, c.design.seed)
                               : qmc_design(space, c.design.n, c.design.skip);
}

// ---------------------------------------------------------------------------
// bench models

struct BenchChoice {
  std::string name = "gfunction";
  std::vector<double> a{0.0, 1.0, 4.5, 9.0, 99.0};
  double ishigami_a = 7.0;
  double ishigami_b = 0.1;
  std::size_t rows = 100;
  std::size_t cols = 100;
};

AnalyticModel make_bench(const BenchChoice& b, const RunConfig& c) {
  if (b.name == "gfunction") return g_function(b.a);
  if (b.name == "ishigami") return ishigami(b.ishigami_a, b.ishigami_b);
  if (b.name == "field_toy") return field_toy(c.space, b.rows, b.cols);
  throw ConfigError("unknown bench model '" + b.name + "' (gfunction, ishigami, field_toy)");
}

void add_bench_options(CLI::App* cmd, BenchChoice& b) {
  cmd->add_option("--model", b.name, "gfunction | ishigami | field_toy")->capture_default_str();
  cmd->add_option("--a", b.a, "g-function coefficients, one per input")->delimiter(',');
  cmd->add_option("--ishigami-a", b.ishigami_a)->capture_default_str();
  cmd->add_option("--ishigami-b", b.ishigami_b)->capture_default_str();
  cmd->add_option("--rows", b.rows, "field_toy grid rows")->capture_default_str();
  cmd->add_option("--cols", b.cols, "field_toy grid columns")->capture_default_str();
}

// ---------------------------------------------------------------------------
// subcommands

int cmd_sample(const RunConfig& c) {
  const auto design = make_design(c, c.space);
  write_design_csv(need_path(c.paths.design, "design"), design);
  std::cout << "wrote " << design.rows() << " x " << design.dims() << " " << to_string(design.provenance)
            << " design to " << c.paths.design << "\n";
  return 0;
}

struct BenchExtras {
  bool list = false;
  std::string input;
  std::size_t reference_n = 0;
  std::size_t test_n = 0;
};

int cmd_bench(const RunConfig& c, const BenchChoice& b, const BenchExtras& x) {
  if (x.list) {
    std::cout << "gfunction   Sobol' g-function on [0,1]^M, --a a1,...,aM\n"
                 "ishigami    Ishigami function on [-pi,pi]^3, --ishigami-a, --ishigami-b\n"
                 "field_toy   rows x cols synthetic field over the configured space, --rows, --cols\n";
    return 0;
  }
  const auto model = make_bench(b, c);
  bool wrote = false;
  if (!c.paths.outputs.empty()) {
    const DesignMatrix design = x.input.empty() ? make_design(c, model.space) : read_design_csv(x.input);
    if (design.dims() != model.dims()) {
      throw DataError("design has " + std::to_string(design.dims()) + " columns but " + model.name + " takes " +
                      std::to_string(model.dims()));
    }
    if (x.input.empty()) write_design_csv(need_path(c.paths.design, "design"), design);
    write_outputs_csv(c.paths.outputs, model.evaluate_design(design), model.grid);
    std::cout << "wrote " << design.rows() << " runs of " << model.name << " (" << model.outputs << " outputs)\n";
    wrote = true;
  }
  if (x.reference_n > 0) {
    const auto ref = mc_reference(model.evaluate, model.outputs, model.space, x.reference_n, c.design.seed);
    save_reference(need_path(c.paths.reference, "reference"), ref);
    std::cout << "wrote reference statistics from " << ref.count << " runs to " << c.paths.reference << "\n";
    wrote = true;
  }
  if (x.test_n > 0) {
    const auto test = held_out_design(model.space, x.test_n, c.design.seed, x.reference_n);
    write_design_csv(need_path(c.paths.test_design, "test design"), test);
    write_outputs_csv(need_path(c.paths.test_outputs, "test outputs"), model.evaluate_design(test), model.grid);
    std::cout << "wrote " << x.test_n << " held-out runs\n";
    wrote = true;
  }
  if (!wrote) throw ConfigError("bench has nothing to write: give --outputs, --reference-n or --test-n");
  return 0;
}

int cmd_fit(const RunConfig& c) {
  const auto design = read_design_csv(need_path(c.paths.design, "design"));
  auto outputs = read_outputs_csv(need_path(c.paths.outputs, "outputs"));
  TrainingSet train{design, std::move(outputs.values), outputs.grid ? outputs.grid : c.grid};
  FitOptions opts;
  opts.rcond = c.surrogate.rcond;
  if (c.surrogate.quantiles == "distribution") {
    opts.quantiles = QuantileSource::distribution;
    opts.space = c.space;
  }
  const auto m = fit(train, c.surrogate.nr, c.surrogate.no, c.surrogate.q, opts);
  save_model(need_path(c.paths.model, "model"), m);

  std::size_t lo = SIZE_MAX, hi = 0, under = 0;
  double cond = 0.0, gram = 0.0;
  for (const auto& d : m.diagnostics) {
    lo = std::min(lo, d.samples);
    hi = std::max(hi, d.samples);
    cond = std::max(cond, d.condition);
    gram = std::max(gram, d.gram_deviation);
    under += d.underdetermined ? 1 : 0;
  }
  std::printf("model: Nr=%d No=%d q=%s, %zu subdomains x %zu terms = %zu coefficients per cell, %zu cells\n",
              m.refinement(), m.degree(), format_double(m.q()).c_str(), m.subdomains(), m.terms(),
              m.coefficients_per_cell(), m.cells);
  std::printf("samples per subdomain: %zu..%zu, max condition %.3g, max gram deviation %.3g\n", lo, hi, cond, gram);
  if (under > 0) std::printf("underdetermined subdomains: %zu\n", under);
  for (std::size_t k = 0; k < m.warnings.size() && k < 5; ++k) warn(m.warnings[k]);
  if (m.warnings.size() > 5) warn(std::to_string(m.warnings.size() - 5) + " more warnings not shown");
  std::cout << "wrote " << c.paths.model << "\n";
  return 0;
}

int cmd_analyze(const RunConfig& c, bool all) {
  const auto m = load_model(need_path(c.paths.model, "model"));
  IndexRequest req;
  req.all = all;
  req.var_floor = c.surrogate.var_floor;
  const auto r = analyze(m, req);
  write_json(need_path(c.paths.report, "report"), report_json(r, m.grid));
  std::printf("%zu of %zu cells above the variance floor\n", r.retained_cells, m.cells);
  for (std::size_t i = 0; i < r.names.size(); ++i) {
    std::printf("%-12s mean first %8.4f  mean total %8.4f\n", r.names[i].c_str(), r.first[i].average.mean,
                r.total[i].average.mean);
  }
  std::cout << "wrote " << c.paths.report << "\n";
  return 0;
}

int cmd_metrics(const RunConfig& c) {
  const auto m = load_model(need_path(c.paths.model, "model"));
  Json j{{"format", "amrpc-metrics"}, {"version", 1}};
  bool any = false;
  if (!c.paths.test_design.empty()) {
    const auto test = read_design_csv(c.paths.test_design);
    const auto truth = read_outputs_csv(need_path(c.paths.test_outputs, "test outputs")).values;
    const auto pred = predict_batch(m, test.values);
    j["test_points"] = test.rows();
    j["rmse"] = rmse(pred, truth);
    const auto rel = relative_mse(pred, truth);
    j["relative_mse"] = rel ? Json(*rel) : Json(nullptr);
    any = true;
  }
  if (!c.paths.reference.empty()) {
    const auto ref = load_reference(c.paths.reference);
    const auto mean = mean_from_coeffs(m);
    auto sd = variance_from_coeffs(m);
    for (double& v : sd) v = std::sqrt(std::max(0.0, v));
    j["reference_runs"] = ref.count;
    j["l2_mean"] = l2_field_error(mean, ref.mean);
    j["l2_sd"] = l2_field_error(sd, ref.sd);
    any = true;
  }
  if (!any) throw ConfigError("metrics needs a test design/outputs pair or a reference file");
  if (c.paths.metrics.empty()) {
    std::cout << j.dump(2) << "\n";
  } else {
    write_json(c.paths.metrics, j);
    std::cout << "wrote " << c.paths.metrics << "\n";
  }
  return 0;
}

// One CSV per field: P rows, grid geometry in a comment, "NA" for undefined cells.
std::string field_csv(const std::vector<double>& v, const std::optional<GridGeometry>& grid) {
  std::string out;
  if (grid) out += grid_comment(*grid);
  out += grid ? "cell,component,row,col,value\n" : "cell,value\n";
  const std::size_t per = grid ? grid->rows * grid->cols : 0;
  for (std::size_t p = 0; p < v.size(); ++p) {
    out += std::to_string(p) + ",";
    if (grid && per > 0) {
      const std::size_t k = p % per;
      out += std::to_string(p / per) + "," + std::to_string(k / grid->cols) + "," + std::to_string(k % grid->cols) + ",";
    }
    out += std::isfinite(v[p]) ? format_double(v[p]) : "NA";
    out += "\n";
  }
  return out;
}

int cmd_export(const RunConfig& c) {
  const auto m = load_model(need_path(c.paths.model, "model"));
  const fs::path dir = need_path(c.paths.export_dir, "export directory");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
  const double floor = c.surrogate.var_floor;
  const auto mean = mean_from_coeffs(m);
  const auto var = variance_from_coeffs(m);
  std::vector<double> sd(var.size()), logvar(var.size());
  for (std::size_t p = 0; p < var.size(); ++p) {
    sd[p] = std::sqrt(std::max(0.0, var[p]));
    logvar[p] = var[p] >= floor && var[p] > 0.0 ? std::log(var[p]) : std::nan("");
  }
  write_file_atomic(dir / "mean.csv", field_csv(mean, m.grid));
  write_file_atomic(dir / "sd.csv", field_csv(sd, m.grid));
  write_file_atomic(dir / "log_variance.csv", field_csv(logvar, m.grid));
  IndexRequest req;
  req.first = false;
  req.var_floor = floor;
  const auto r = analyze(m, req);
  for (std::size_t i = 0; i < r.total.size(); ++i) {
    write_file_atomic(dir / ("total_" + r.names[i] + ".csv"), field_csv(r.total[i].values, m.grid));
  }
  std::cout << "wrote " << 3 + r.total.size() << " field files with " << m.cells << " rows each to " << dir.string()
            << "\n";
  return 0;
}

struct OracleOptions {
  std::size_t n = 200000;
  std::size_t bootstrap = 200;
  std::vector<std::size_t> cells;
  std::string out;
};

int cmd_oracle(const RunConfig& c, const BenchChoice& b, const OracleOptions& o) {
  const auto model = make_bench(b, c);
  const auto r = mc_sobol_oracle(model.evaluate, model.outputs, model.space, o.n, c.design.seed, o.cells, o.bootstrap);
  const auto names = model.space.names();
  Json j{{"format", "amrpc-oracle"}, {"version", 1},       {"model", model.name},
         {"n", r.n},                 {"seed", r.seed},     {"bootstrap", r.bootstrap},
         {"names", names},           {"cells", Json::array()}};
  for (const auto& cell : r.cells) {
    Json e{{"cell", cell.cell}, {"defined", cell.defined}, {"variance", cell.variance}};
    for (const char* kind : {"first", "total"}) {
      const bool first = std::string(kind) == "first";
      const auto& est = first ? cell.first : cell.total;
      const auto& sd = first ? cell.first_sd : cell.total_sd;
      Json k = Json::object();
      for (std::size_t i = 0; i < est.size() && i < names.size(); ++i) {
        k[names[i]] = {{"estimate", detail::number(est[i])},
                       {"sd", detail::number(sd[i])},
                       {"ci95", {detail::number(est[i] - 1.96 * sd[i]), detail::number(est[i] + 1.96 * sd[i])}}};
      }
      e[kind] = k;
    }
    j["cells"].push_back(e);
  }
  if (model.closed_form) {
    j["closed_form"] = {{"variance", model.closed_form->variance},
                        {"first", model.closed_form->first},
                        {"total", model.closed_form->total}};
  }
  if (o.out.empty()) {
    std::cout << j.dump(2) << "\n";
  } else {
    write_json(o.out, j);
    std::cout << "wrote " << o.out << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"aMR-PC surrogates and coefficient-based Sobol' sensitivity analysis"};
  app.require_subcommand(1);
  Overrides o;
  BenchChoice bench;
  BenchExtras extras;
  OracleOptions oracle;
  bool all = false;

  auto common = [&](CLI::App* cmd) { cmd->add_option("--config", o.config, "JSON run configuration"); };
  auto design_flags = [&](CLI::App* cmd) {
    cmd->add_option("--n", o.n, "number of runs");
    cmd->add_option("--kind", o.kind, "qmc | mc");
    cmd->add_option("--seed", o.seed, "random seed (mc designs, references, oracle)");
    cmd->add_option("--skip", o.skip, "leading points skipped in the stream");
  };
  auto fit_flags = [&](CLI::App* cmd) {
    cmd->add_option("--nr", o.nr, "refinement level Nr");
    cmd->add_option("--no", o.no, "polynomial degree No");
    cmd->add_option("--q", o.q, "hyperbolic truncation norm");
    cmd->add_option("--rcond", o.rcond, "relative singular value cutoff");
    cmd->add_option("--quantiles", o.quantiles, "empirical | distribution");
  };

  auto* sample = app.add_subcommand("sample", "write a QMC or MC design");
  common(sample);
  design_flags(sample);
  sample->add_option("--design", o.design, "design CSV to write");

  auto* benchc = app.add_subcommand("bench", "evaluate a benchmark model on a design");
  common(benchc);
  design_flags(benchc);
  add_bench_options(benchc, bench);
  benchc->add_flag("--list", extras.list, "list the models");
  benchc->add_option("--input", extras.input, "evaluate an existing design CSV instead of sampling");
  benchc->add_option("--design", o.design, "design CSV to write");
  benchc->add_option("--outputs", o.outputs, "outputs CSV to write");
  benchc->add_option("--reference-n", extras.reference_n, "also write MC reference statistics of this many runs");
  benchc->add_option("--reference", o.reference, "reference file to write");
  benchc->add_option("--test-n", extras.test_n, "also write this many held-out runs");
  benchc->add_option("--test-design", o.test_design);
  benchc->add_option("--test-outputs", o.test_outputs);

  auto* fitc = app.add_subcommand("fit", "fit the surrogate to design and outputs");
  common(fitc);
  fit_flags(fitc);
  fitc->add_option("--design", o.design, "design CSV");
  fitc->add_option("--outputs", o.outputs, "outputs CSV");
  fitc->add_option("--model", o.model, "model file to write");

  auto* analyzec = app.add_subcommand("analyze", "Sobol' indices from the coefficients");
  common(analyzec);
  analyzec->add_option("--model", o.model, "model file");
  analyzec->add_option("--report", o.report, "report JSON to write");
  analyzec->add_option("--var-floor", o.var_floor, "cells with smaller variance are excluded");
  analyzec->add_flag("--all", all, "indices of every parameter subset");

  auto* metricsc = app.add_subcommand("metrics", "surrogate errors against held-out runs and MC references");
  common(metricsc);
  metricsc->add_option("--model", o.model, "model file");
  metricsc->add_option("--test-design", o.test_design);
  metricsc->add_option("--test-outputs", o.test_outputs);
  metricsc->add_option("--reference", o.reference);
  metricsc->add_option("--metrics", o.metrics, "metrics JSON to write (stdout when absent)");

  auto* exportc = app.add_subcommand("export", "per-cell field CSVs: mean, sd, log-variance, total indices");
  common(exportc);
  exportc->add_option("--model", o.model, "model file");
  exportc->add_option("--dir", o.export_dir, "output directory");
  exportc->add_option("--var-floor", o.var_floor, "log-variance and indices are NA below this variance");

  auto* oraclec = app.add_subcommand("oracle", "pick-freeze Monte-Carlo Sobol' indices of a bench model");
  common(oraclec);
  add_bench_options(oraclec, bench);
  oraclec->add_option("--n", oracle.n, "base sample size")->capture_default_str();
  oraclec->add_option("--seed", o.seed, "random seed");
  oraclec->add_option("--bootstrap", oracle.bootstrap, "bootstrap resamples")->capture_default_str();
  oraclec->add_option("--cells", oracle.cells, "output cells to estimate (default all)")->delimiter(',');
  oraclec->add_option("--out", oracle.out, "JSON to write (stdout when absent)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const RunConfig c = resolve(o);
    if (sample->parsed()) return cmd_sample(c);
    if (benchc->parsed()) return cmd_bench(c, bench, extras);
    if (fitc->parsed()) return cmd_fit(c);
    if (analyzec->parsed()) return cmd_analyze(c, all);
    if (metricsc->parsed()) return cmd_metrics(c);
    if (exportc->parsed()) return cmd_export(c);
    if (oraclec->parsed()) return cmd_oracle(c, bench, oracle);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
