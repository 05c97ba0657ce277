#include "nlcausal/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace nlcausal {

std::string format17(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

namespace {

void dump_rec(const nlohmann::json& j, int indent, int depth, std::string& out) {
  const auto newline = [&](int d) {
    if (indent < 0) return;
    out += '\n';
    out.append(static_cast<std::size_t>(indent * d), ' ');
  };
  switch (j.type()) {
    case nlohmann::json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += '{';
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out += ',';
        first = false;
        newline(depth + 1);
        out += nlohmann::json(it.key()).dump();
        out += indent < 0 ? ":" : ": ";
        dump_rec(it.value(), indent, depth + 1, out);
      }
      newline(depth);
      out += '}';
      return;
    }
    case nlohmann::json::value_t::array: {
      if (j.empty()) {
        out += "[]";
        return;
      }
      out += '[';
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i > 0) out += indent < 0 ? "," : ", ";
        dump_rec(j[i], indent, depth + 1, out);
      }
      out += ']';
      return;
    }
    case nlohmann::json::value_t::number_float: {
      const double v = j.get<double>();
      out += std::isfinite(v) ? format17(v) : "null";
      return;
    }
    default: out += j.dump();
  }
}

std::string trim(std::string s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_cell(const std::string& cell, std::size_t line_no) {
  double v = 0;
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  if (!cell.empty() && *begin == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, end, v);
  if (cell.empty() || ec != std::errc() || ptr != end || !std::isfinite(v))
    fail(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": malformed cell '" + cell + "'");
  return v;
}

}  // namespace

std::string dump17(const nlohmann::json& value, int indent) {
  std::string out;
  dump_rec(value, indent, 0, out);
  return out;
}

StageOneData read_stage_one_csv(std::istream& in) {
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::ParseError, "missing header row");
  const auto header = split(line);

  std::map<long, std::size_t> zcols;  // instrument number -> column
  std::size_t xcol = header.size();
  for (std::size_t c = 0; c < header.size(); ++c) {
    const auto& name = header[c];
    if (name == "x") {
      require(xcol == header.size(), ErrorCode::SchemaError, "duplicate x column");
      xcol = c;
    } else if (name.size() > 1 && name[0] == 'z' && name.find_first_not_of("0123456789", 1) == std::string::npos) {
      const long k = std::stol(name.substr(1));
      require(k >= 1 && zcols.emplace(k, c).second, ErrorCode::SchemaError, "bad instrument column '" + name + "'");
    } else {
      fail(ErrorCode::SchemaError, "unexpected column '" + name + "'");
    }
  }
  require(xcol != header.size(), ErrorCode::SchemaError, "no x column");
  require(!zcols.empty(), ErrorCode::SchemaError, "no instrument columns");
  require(zcols.rbegin()->first == static_cast<long>(zcols.size()), ErrorCode::SchemaError,
          "instrument columns must be z1..zp");

  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split(line);
    require(cells.size() == header.size(), ErrorCode::ParseError,
            "line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) + " cells");
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& cell : cells) row.push_back(parse_cell(cell, line_no));
    rows.push_back(std::move(row));
  }

  const auto n = static_cast<Index>(rows.size());
  const auto p = static_cast<Index>(zcols.size());
  StageOneData data;
  data.Z.resize(n, p);
  data.x.resize(n);
  data.z_shift = Vector<double>::Zero(p);
  for (Index i = 0; i < n; ++i) {
    const auto& row = rows[static_cast<std::size_t>(i)];
    for (const auto& [k, c] : zcols) data.Z(i, k - 1) = row[c];
    data.x(i) = row[xcol];
  }
  validate(data);
  return data;
}

StageOneData load_stage_one(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::IoError, "cannot open '" + path + "'");
  return read_stage_one_csv(in);
}

void write_stage_one_csv(std::ostream& out, const StageOneData& data) {
  for (Index j = 0; j < data.p(); ++j) out << 'z' << (j + 1) << ',';
  out << "x\n";
  for (Index i = 0; i < data.n(); ++i) {
    for (Index j = 0; j < data.p(); ++j) out << format17(data.Z(i, j)) << ',';
    out << format17(data.x(i)) << '\n';
  }
}

void save_stage_one(const std::string& path, const StageOneData& data) {
  std::ostringstream ss;
  write_stage_one_csv(ss, data);
  write_text_file(path, ss.str());
}

StageOneData uncentered(const StageOneData& data) {
  StageOneData out;
  out.Z = data.Z;
  if (data.z_shift.size() == data.p()) out.Z.rowwise() += data.z_shift.transpose();
  out.x = data.raw_x();
  out.z_shift = Vector<double>::Zero(data.p());
  return out;
}

nlohmann::json to_json(const SummaryStats& stats) {
  const Index p = stats.p();
  std::vector<double> szz;
  szz.reserve(static_cast<std::size_t>(p * p));
  for (Index i = 0; i < p; ++i)
    for (Index j = 0; j < p; ++j) szz.push_back(stats.S_zz(i, j));
  return {{"n2", stats.n2},
          {"p", p},
          {"s_zz", szz},
          {"s_zy", std::vector<double>(stats.s_zy.data(), stats.s_zy.data() + p)},
          {"s_yy", stats.s_yy}};
}

SummaryStats summary_from_json(const nlohmann::json& j) {
  require(j.is_object(), ErrorCode::SchemaError, "summary must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& k = it.key();
    require(k == "n2" || k == "p" || k == "s_zz" || k == "s_zy" || k == "s_yy", ErrorCode::SchemaError,
            "unexpected key '" + k + "'");
  }
  for (const char* k : {"n2", "p", "s_zz", "s_zy", "s_yy"})
    require(j.contains(k), ErrorCode::SchemaError, std::string("missing key '") + k + "'");
  require(j["n2"].is_number_integer() && j["p"].is_number_integer(), ErrorCode::SchemaError,
          "n2 and p must be integers");
  require(j["s_zz"].is_array() && j["s_zy"].is_array() && j["s_yy"].is_number(), ErrorCode::SchemaError,
          "s_zz and s_zy must be arrays, s_yy a number");
  const auto p = j["p"].get<Index>();
  require(p >= 1, ErrorCode::SchemaError, "p must be positive");
  require(j["s_zz"].size() == static_cast<std::size_t>(p * p) && j["s_zy"].size() == static_cast<std::size_t>(p),
          ErrorCode::DimensionMismatch, "summary arrays do not match p");

  SummaryStats s;
  s.n2 = j["n2"].get<Index>();
  s.S_zz.resize(p, p);
  s.s_zy.resize(p);
  for (Index i = 0; i < p; ++i) {
    for (Index k = 0; k < p; ++k) {
      const auto& v = j["s_zz"][static_cast<std::size_t>(i * p + k)];
      require(v.is_number(), ErrorCode::SchemaError, "s_zz entries must be numbers");
      s.S_zz(i, k) = v.get<double>();
    }
    const auto& v = j["s_zy"][static_cast<std::size_t>(i)];
    require(v.is_number(), ErrorCode::SchemaError, "s_zy entries must be numbers");
    s.s_zy(i) = v.get<double>();
  }
  s.s_yy = j["s_yy"].get<double>();
  return normalize(s);
}

SummaryStats load_summary(const std::string& path) {
  const std::string text = read_text_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, "'" + path + "': " + e.what());
  }
  return summary_from_json(j);
}

void save_summary(const std::string& path, const SummaryStats& stats) {
  write_text_file(path, dump17(to_json(stats)) + "\n");
}

void write_transform_csv(std::ostream& out, const TransformEstimate& est) {
  require(est.grid.size() == est.values.size(), ErrorCode::GridMismatch, "grid and values differ in length");
  out << "x,phi_hat\n";
  for (Index i = 0; i < est.grid.size(); ++i) out << format17(est.grid(i)) << ',' << format17(est.values(i)) << '\n';
}

namespace {
template <typename V>
std::vector<double> to_vec(const V& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}
}  // namespace

nlohmann::json to_json(const CausalFit& fit) {
  return {{"beta_hat", fit.beta_hat},
          {"theta_hat", to_vec(fit.theta_hat)},
          {"beta_report", fit.beta_report},
          {"theta_unit", to_vec(fit.theta_unit)},
          {"alpha_hat", to_vec(fit.alpha_hat)},
          {"invalid_set", fit.invalid_set},
          {"sigma_e_hat", fit.sigma_e_hat},
          {"omega_x_hat", fit.omega_x_hat},
          {"n_slices", fit.n_slices},
          {"degenerate_spectrum", fit.degenerate_spectrum}};
}

nlohmann::json to_json(const TestResult& r) {
  nlohmann::json j = {{"method", to_string(r.method)},
                      {"statistic", r.statistic},
                      {"p_value", r.p_value},
                      {"n_slices", r.n_slices}};
  if (r.method == Method::Comb2SIR) {
    j["p_star"] = r.p_value;
    j["t0"] = r.statistic;
    j["slices_used"] = r.slices_used;
    j["slice_p_values"] = r.slice_p_values;
  }
  return j;
}

nlohmann::json to_json(const ConfidenceInterval& ci) {
  return {{"lower", ci.lower},
          {"upper", ci.upper},
          {"level", ci.level},
          {"monte_carlo_size", ci.monte_carlo_size},
          {"quantile", ci.quantile}};
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::IoError, "cannot write '" + path + "'");
  out << text;
  out.flush();
  require(out.good(), ErrorCode::IoError, "write to '" + path + "' failed");
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::IoError, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace nlcausal
