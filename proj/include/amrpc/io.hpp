#pragma once

// Dataset and model files.
//
// CSV: comma separated, '.' decimal, '#' comment lines, one row of column
// names. Numbers use the shortest representation that round-trips.
//
// Model file (all integers and floats little-endian):
//   bytes 0..7    magic "AMRPCMDL"
//   bytes 8..11   uint32 format version
//   bytes 12..19  uint64 length L of the JSON header
//   next L bytes  UTF-8 JSON header (metadata, decomposition, bases, degree
//                 set, diagnostics)
//   remainder     float64 coefficients, cell-major, then subdomain, then
//                 degree-set position
//
// Reference file: magic "AMRPCREF", uint32 version, uint64 count, uint64 seed,
// uint64 P, then P float64 means and P float64 standard deviations.

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <Eigen/Dense>

#include <nlohmann/json.hpp>

#include "amrpc/errors.hpp"
#include "amrpc/gsa.hpp"
#include "amrpc/metrics.hpp"
#include "amrpc/multires.hpp"
#include "amrpc/polybasis.hpp"
#include "amrpc/qmc.hpp"
#include "amrpc/surrogate.hpp"

namespace amrpc {

using Json = nlohmann::ordered_json;

inline constexpr std::uint32_t kModelFormatVersion = 1;
inline constexpr std::uint32_t kReferenceFormatVersion = 1;
inline constexpr int kReportFormatVersion = 1;

// ---------------------------------------------------------------------------
// Text helpers

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::optional<double> parse_double(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    out.emplace_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string join(const std::vector<std::string>& parts, char sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

/// Writes to a temporary sibling and renames it over `path`, so a failed run
/// never leaves a partial file behind.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  namespace fs = std::filesystem;
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      out.close();
      std::error_code ec;
      fs::remove(tmp, ec);
      throw DataError("failed writing " + path.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw DataError("cannot move output into place at " + path.string());
  }
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// CSV

struct CsvTable {
  std::vector<std::string> comments;  // without the leading '#', trimmed
  std::vector<std::string> names;
  Eigen::MatrixXd values;
};

inline CsvTable parse_csv(std::string_view text, const std::string& label = "csv") {
  CsvTable t;
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 0;
  bool have_header = false;
  for (const auto& raw : split(text, '\n')) {
    ++line_no;
    std::string_view line(raw);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (line.front() == '#') {
      std::string_view c = line.substr(1);
      while (!c.empty() && c.front() == ' ') c.remove_prefix(1);
      t.comments.emplace_back(c);
      continue;
    }
    auto fields = split(line, ',');
    if (!have_header) {
      for (auto& f : fields) {
        while (!f.empty() && f.front() == ' ') f.erase(f.begin());
        while (!f.empty() && f.back() == ' ') f.pop_back();
      }
      t.names = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != t.names.size()) {
      throw DataError(label + ": line " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                      " fields, expected " + std::to_string(t.names.size()));
    }
    std::vector<double> row(fields.size());
    for (std::size_t j = 0; j < fields.size(); ++j) {
      const auto v = parse_double(fields[j]);
      if (!v) {
        throw DataError(label + ": line " + std::to_string(line_no) + ", column " + std::to_string(j + 1) +
                        ": not a number: '" + fields[j] + "'");
      }
      row[j] = *v;
    }
    rows.push_back(std::move(row));
  }
  if (!have_header) throw DataError(label + ": missing column-name row");
  t.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(t.names.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      t.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  return t;
}

inline CsvTable read_csv(const std::filesystem::path& path) { return parse_csv(read_file(path), path.string()); }

inline void append_rows(std::string& out, const Eigen::MatrixXd& values) {
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    for (Eigen::Index j = 0; j < values.cols(); ++j) {
      if (j) out += ',';
      out += format_double(values(i, j));
    }
    out += '\n';
  }
}

/// "key=value" tokens of a header comment such as "qmc skip=1 dims=a,b".
inline std::optional<std::string> comment_field(const std::string& comment, const std::string& key) {
  for (const auto& tok : split(comment, ' ')) {
    if (tok.size() > key.size() && tok.compare(0, key.size() + 1, key + "=") == 0) return tok.substr(key.size() + 1);
  }
  return std::nullopt;
}

inline std::string design_csv(const DesignMatrix& design) {
  std::vector<std::string> names = design.names;
  if (names.size() != design.dims()) {
    names.clear();
    for (std::size_t j = 0; j < design.dims(); ++j) names.push_back("x" + std::to_string(j + 1));
  }
  std::string out = "# " + to_string(design.provenance);
  if (design.provenance == Provenance::qmc) out += " skip=" + std::to_string(design.skip);
  if (design.provenance == Provenance::mc) {
    out += " seed=" + std::to_string(design.seed) + " offset=" + std::to_string(design.skip);
  }
  out += " dims=" + join(names, ',') + "\n";
  out += join(names, ',') + "\n";
  append_rows(out, design.values);
  return out;
}

inline void write_design_csv(const std::filesystem::path& path, const DesignMatrix& design) {
  write_file_atomic(path, design_csv(design));
}

inline DesignMatrix read_design_csv(const std::filesystem::path& path) {
  CsvTable t = read_csv(path);
  DesignMatrix d;
  d.values = std::move(t.values);
  d.names = std::move(t.names);
  for (const auto& c : t.comments) {
    const auto head = split(c, ' ').front();
    if (head == "qmc") {
      d.provenance = Provenance::qmc;
      if (auto s = comment_field(c, "skip")) d.skip = std::stoull(*s);
    } else if (head == "mc") {
      d.provenance = Provenance::mc;
      if (auto s = comment_field(c, "seed")) d.seed = std::stoull(*s);
      if (auto s = comment_field(c, "offset")) d.skip = std::stoull(*s);
    }
  }
  return d;
}

inline std::string grid_comment(const GridGeometry& g) {
  std::string out = "# grid rows=" + std::to_string(g.rows) + " cols=" + std::to_string(g.cols);
  if (!g.components.empty()) out += " components=" + join(g.components, ',');
  return out + "\n";
}

inline std::optional<GridGeometry> parse_grid_comment(const std::vector<std::string>& comments) {
  for (const auto& c : comments) {
    if (split(c, ' ').front() != "grid") continue;
    GridGeometry g;
    const auto r = comment_field(c, "rows");
    const auto k = comment_field(c, "cols");
    if (!r || !k) throw DataError("grid comment needs rows= and cols=");
    g.rows = std::stoull(*r);
    g.cols = std::stoull(*k);
    if (auto comp = comment_field(c, "components")) g.components = split(*comp, ',');
    return g;
  }
  return std::nullopt;
}

/// Outputs CSV: row = run, column = cell.
inline std::string outputs_csv(const Eigen::MatrixXd& outputs, const std::optional<GridGeometry>& grid = {}) {
  std::string out;
  if (grid) out += grid_comment(*grid);
  for (Eigen::Index p = 0; p < outputs.cols(); ++p) {
    if (p) out += ',';
    out += "y" + std::to_string(p);
  }
  out += '\n';
  append_rows(out, outputs);
  return out;
}

inline void write_outputs_csv(const std::filesystem::path& path, const Eigen::MatrixXd& outputs,
                              const std::optional<GridGeometry>& grid = {}) {
  write_file_atomic(path, outputs_csv(outputs, grid));
}

struct OutputsFile {
  Eigen::MatrixXd values;
  std::optional<GridGeometry> grid;
};

inline OutputsFile read_outputs_csv(const std::filesystem::path& path) {
  CsvTable t = read_csv(path);
  return {std::move(t.values), parse_grid_comment(t.comments)};
}

// ---------------------------------------------------------------------------
// Little-endian binary helpers

namespace detail {

template <class T>
void put_le(std::string& out, T v) {
  static_assert(std::is_integral_v<T>);
  for (std::size_t b = 0; b < sizeof(T); ++b) out.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * b)) & 0xFF));
}

inline void put_f64(std::string& out, double v) { put_le(out, std::bit_cast<std::uint64_t>(v)); }

class ByteReader {
 public:
  ByteReader(std::string_view data, std::string label) : data_(data), label_(std::move(label)) {}

  std::string_view take(std::size_t n) {
    if (data_.size() - pos_ < n) throw DataError(label_ + ": file is truncated");
    const auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  template <class T>
  T le() {
    const auto s = take(sizeof(T));
    std::uint64_t v = 0;
    for (std::size_t b = 0; b < sizeof(T); ++b) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[b])) << (8 * b);
    return static_cast<T>(v);
  }
  double f64() { return std::bit_cast<double>(le<std::uint64_t>()); }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  std::string_view data_;
  std::size_t pos_ = 0;
  std::string label_;
};

inline void check_magic(ByteReader& r, std::string_view magic, std::uint32_t version, const std::string& label) {
  if (r.take(magic.size()) != magic) throw DataError(label + ": not a " + std::string(magic) + " file");
  const auto v = r.le<std::uint32_t>();
  if (v != version) {
    throw DataError(label + ": unsupported format version " + std::to_string(v) + " (expected " +
                    std::to_string(version) + ")");
  }
}

// JSON has no NaN or infinity; such values are written as null.
inline Json number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline double number_or(const Json& j, double fallback) { return j.is_null() ? fallback : j.get<double>(); }

inline Json numbers(std::span<const double> v) {
  Json a = Json::array();
  for (double x : v) a.push_back(number(x));
  return a;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Model file

inline Json grid_json(const std::optional<GridGeometry>& grid) {
  if (!grid) return nullptr;
  return Json{{"rows", grid->rows}, {"cols", grid->cols}, {"components", grid->components}};
}

inline std::optional<GridGeometry> grid_from_json(const Json& j) {
  if (j.is_null()) return std::nullopt;
  return GridGeometry{j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                      j.at("components").get<std::vector<std::string>>()};
}

inline std::string model_bytes(const SurrogateModel& m) {
  Json h;
  h["format"] = "amrpc-model";
  h["refinement"] = m.refinement();
  h["degree"] = m.degree();
  h["q"] = m.q();
  h["dims"] = m.dims();
  h["names"] = m.names;
  h["cells"] = m.cells;
  h["terms"] = m.terms();
  h["subdomains"] = m.subdomains();
  h["n_train"] = m.n_train;
  h["rcond"] = m.rcond;
  h["provenance"] = to_string(m.provenance);
  h["skip"] = m.skip;
  h["seed"] = m.seed;
  h["grid"] = grid_json(m.grid);
  h["breakpoints"] = m.basis.decomposition.breakpoints;
  Json bases = Json::array();
  for (const auto& dim : m.basis.bases) {
    Json row = Json::array();
    for (const auto& b : dim) {
      row.push_back(Json{{"center", b.center()},
                         {"half_width", b.half_width()},
                         {"alpha", b.alpha()},
                         {"beta", b.beta()},
                         {"gram_deviation", detail::number(b.gram_deviation())}});
    }
    bases.push_back(std::move(row));
  }
  h["bases"] = std::move(bases);
  h["degree_set"] = m.degrees.items();
  Json diag = Json::array();
  for (const auto& d : m.diagnostics) {
    diag.push_back(Json{{"samples", d.samples},
                        {"rank", d.rank},
                        {"condition", detail::number(d.condition)},
                        {"gram_deviation", detail::number(d.gram_deviation)},
                        {"underdetermined", d.underdetermined}});
  }
  h["diagnostics"] = std::move(diag);
  h["warnings"] = m.warnings;
  h["decomposition_warnings"] = m.basis.decomposition.warnings;

  const std::string header = h.dump();
  std::string out = "AMRPCMDL";
  detail::put_le<std::uint32_t>(out, kModelFormatVersion);
  detail::put_le<std::uint64_t>(out, header.size());
  out += header;
  out.reserve(out.size() + 8 * m.coefficients.size());
  for (double c : m.coefficients) detail::put_f64(out, c);
  return out;
}

inline SurrogateModel model_from_bytes(std::string_view bytes, const std::string& label = "model file") {
  detail::ByteReader r(bytes, label);
  detail::check_magic(r, "AMRPCMDL", kModelFormatVersion, label);
  const auto len = r.le<std::uint64_t>();
  if (len > r.remaining()) throw DataError(label + ": file is truncated");
  Json h;
  try {
    h = Json::parse(r.take(static_cast<std::size_t>(len)));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(label + ": malformed header: " + e.what());
  }
  SurrogateModel m;
  try {
    const int Nr = h.at("refinement").get<int>();
    const int No = h.at("degree").get<int>();
    const auto M = h.at("dims").get<std::size_t>();
    m.basis.degree = No;
    m.basis.decomposition.refinement = Nr;
    m.basis.decomposition.breakpoints = h.at("breakpoints").get<std::vector<std::vector<double>>>();
    for (const auto& dim : h.at("bases")) {
      std::vector<OrthonormalBasis1D> row;
      for (const auto& b : dim) {
        OrthonormalBasis1D basis(b.at("alpha").get<std::vector<double>>(), b.at("beta").get<std::vector<double>>(),
                                 b.at("center").get<double>(), b.at("half_width").get<double>());
        basis.set_gram_deviation(detail::number_or(b.at("gram_deviation"), std::numeric_limits<double>::quiet_NaN()));
        row.push_back(std::move(basis));
      }
      m.basis.bases.push_back(std::move(row));
    }
    m.basis.decomposition.warnings = h.at("decomposition_warnings").get<std::vector<std::string>>();
    m.degrees = DegreeIndexSet(M, No, h.at("q").get<double>(), h.at("degree_set").get<std::vector<MultiIndex>>());
    m.cells = h.at("cells").get<std::size_t>();
    m.n_train = h.at("n_train").get<std::size_t>();
    m.rcond = h.at("rcond").get<double>();
    const auto prov = h.at("provenance").get<std::string>();
    m.provenance = prov == "qmc" ? Provenance::qmc : prov == "mc" ? Provenance::mc : Provenance::external;
    m.skip = h.at("skip").get<std::uint64_t>();
    m.seed = h.at("seed").get<std::uint64_t>();
    m.names = h.at("names").get<std::vector<std::string>>();
    m.grid = grid_from_json(h.at("grid"));
    for (const auto& d : h.at("diagnostics")) {
      m.diagnostics.push_back({d.at("samples").get<std::size_t>(), d.at("rank").get<std::size_t>(),
                               detail::number_or(d.at("condition"), std::numeric_limits<double>::infinity()),
                               detail::number_or(d.at("gram_deviation"), std::numeric_limits<double>::quiet_NaN()),
                               d.at("underdetermined").get<bool>()});
    }
    m.warnings = h.at("warnings").get<std::vector<std::string>>();
    if (m.basis.decomposition.dims() != M || m.basis.bases.size() != M || m.degrees.size() != h.at("terms").get<std::size_t>()) {
      throw DataError(label + ": inconsistent header");
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(label + ": malformed header: " + e.what());
  }
  const std::size_t count = m.cells * m.coefficients_per_cell();
  if (r.remaining() != 8 * count) {
    throw DataError(label + ": expected " + std::to_string(count) + " coefficients, found " +
                    std::to_string(r.remaining() / 8));
  }
  m.coefficients.resize(count);
  for (auto& c : m.coefficients) c = r.f64();
  return m;
}

inline void save_model(const std::filesystem::path& path, const SurrogateModel& model) {
  write_file_atomic(path, model_bytes(model));
}

inline SurrogateModel load_model(const std::filesystem::path& path) {
  return model_from_bytes(read_file(path), path.string());
}

// ---------------------------------------------------------------------------
// Reference statistics file

inline std::string reference_bytes(const ReferenceStats& ref) {
  std::string out = "AMRPCREF";
  detail::put_le<std::uint32_t>(out, kReferenceFormatVersion);
  detail::put_le<std::uint64_t>(out, ref.count);
  detail::put_le<std::uint64_t>(out, ref.seed);
  detail::put_le<std::uint64_t>(out, ref.mean.size());
  for (double v : ref.mean) detail::put_f64(out, v);
  for (double v : ref.sd) detail::put_f64(out, v);
  return out;
}

inline ReferenceStats reference_from_bytes(std::string_view bytes, const std::string& label = "reference file") {
  detail::ByteReader r(bytes, label);
  detail::check_magic(r, "AMRPCREF", kReferenceFormatVersion, label);
  ReferenceStats ref;
  ref.count = r.le<std::uint64_t>();
  ref.seed = r.le<std::uint64_t>();
  const auto P = r.le<std::uint64_t>();
  if (r.remaining() != 16 * P) throw DataError(label + ": size does not match its cell count");
  ref.mean.resize(P);
  ref.sd.resize(P);
  for (auto& v : ref.mean) v = r.f64();
  for (auto& v : ref.sd) v = r.f64();
  return ref;
}

inline void save_reference(const std::filesystem::path& path, const ReferenceStats& ref) {
  write_file_atomic(path, reference_bytes(ref));
}

inline ReferenceStats load_reference(const std::filesystem::path& path) {
  return reference_from_bytes(read_file(path), path.string());
}

// ---------------------------------------------------------------------------
// Reports

inline Json average_json(const SpaceAverage& a) {
  if (a.empty) return Json{{"retained", 0}, {"mean", nullptr}};
  return Json{{"retained", a.retained},
              {"mean", detail::number(a.mean)},
              {"lower_whisker", detail::number(a.summary.lower_whisker)},
              {"q1", detail::number(a.summary.q1)},
              {"median", detail::number(a.summary.median)},
              {"q3", detail::number(a.summary.q3)},
              {"upper_whisker", detail::number(a.summary.upper_whisker)},
              {"outliers", detail::numbers(a.summary.outliers)}};
}

/// Report JSON: per-cell arrays keyed by parameter name (first, total) or by
/// subset label (interactions, e.g. "13"), plus a space_averaged block holding
/// the means and box-plot statistics over the retained cells.
inline Json report_json(const SensitivityReport& r, const std::optional<GridGeometry>& grid = {}) {
  Json j;
  j["format"] = "amrpc-report";
  j["version"] = kReportFormatVersion;
  j["names"] = r.names;
  j["refinement"] = r.refinement;
  j["degree"] = r.degree;
  j["q"] = r.q;
  j["n_train"] = r.n_train;
  j["var_floor"] = r.var_floor;
  j["cells"] = r.mean.size();
  j["retained_cells"] = r.retained_cells;
  j["grid"] = grid_json(grid);
  j["mean"] = detail::numbers(r.mean);
  j["variance"] = detail::numbers(r.variance);

  auto key = [&](const IndexField& f) {
    return f.subset.size() == 1 ? r.names.at(f.subset.dims().front()) : f.subset.label();
  };
  auto fields = [&](const std::vector<IndexField>& v, bool by_label) {
    Json out = Json::object();
    for (const auto& f : v) out[by_label ? f.subset.label() : key(f)] = detail::numbers(f.values);
    return out;
  };
  auto averages = [&](const std::vector<IndexField>& v, bool by_label) {
    Json out = Json::object();
    for (const auto& f : v) {
      Json a = average_json(f.average);
      a["negative_cells"] = f.negative_cells;
      out[by_label ? f.subset.label() : key(f)] = std::move(a);
    }
    return out;
  };
  j["first"] = fields(r.first, false);
  j["total"] = fields(r.total, false);
  j["interactions"] = fields(r.interactions, true);
  j["space_averaged"] = Json{{"first", averages(r.first, false)},
                             {"total", averages(r.total, false)},
                             {"interactions", averages(r.interactions, true)}};
  return j;
}

inline void write_json(const std::filesystem::path& path, const Json& j) { write_file_atomic(path, j.dump(2) + "\n"); }

}  // namespace amrpc
