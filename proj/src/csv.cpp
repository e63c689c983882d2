#include "bpo/csv.hpp"

#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include <boost/algorithm/string.hpp>

#include "bpo/errors.hpp"

namespace bpo {
namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  boost::split(cells, line, boost::is_any_of(","));
  return cells;
}

double to_double(const std::string& s, const std::string& column) {
  try {
    std::size_t used = 0;
    const double x = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("column '" + column + "': cannot parse '" + s + "' as a number");
  }
}

std::size_t to_count(const std::string& s, const std::string& column) {
  const double x = to_double(s, column);
  if (x < 0.0 || x != static_cast<double>(static_cast<std::size_t>(x)))
    throw ConfigError("column '" + column + "': '" + s + "' is not a count");
  return static_cast<std::size_t>(x);
}

void expect_header(const std::vector<std::string>& got, const std::vector<std::string>& want) {
  for (std::size_t i = 0; i < want.size(); ++i) {
    if (i >= got.size()) throw ConfigError("missing column '" + want[i] + "'");
    if (got[i] != want[i])
      throw ConfigError("column " + std::to_string(i) + " is '" + got[i] + "', expected '" +
                        want[i] + "'");
  }
}

}  // namespace

std::string format_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", x);
  return buf;
}

void write_learning_csv(std::ostream& out, const std::vector<IterationRecord>& records) {
  out << kLearningHeader << '\n';
  for (const auto& r : records)
    out << r.k << ',' << format_double(r.avg_return) << ',' << format_double(r.return_ci95)
        << ',' << format_double(r.grad_norm) << ',' << format_double(r.est_variance) << ','
        << format_double(r.kl_estimate) << ',' << format_double(r.beta_used) << ','
        << r.cum_trajectories << '\n';
}

void write_variance_gap_csv(std::ostream& out, const std::vector<VarianceGapRow>& rows,
                            SweptParam param) {
  out << kVarianceGapHeaderPrefix << ',' << swept_param_name(param) << '\n';
  for (const auto& r : rows)
    out << format_double(r.dvar) << ',' << format_double(r.dvar_minus) << ','
        << format_double(r.dvar_plus) << ',' << (r.biased ? "True" : "False") << ','
        << format_double(r.beta) << ',' << r.n_bpo << ',' << r.n_pg << ','
        << format_double(r.param) << '\n';
}

CsvTable read_csv(std::istream& in) {
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("empty CSV");
  boost::trim_right_if(line, boost::is_any_of("\r"));
  t.header = split_line(line);
  while (std::getline(in, line)) {
    boost::trim_right_if(line, boost::is_any_of("\r"));
    if (line.empty()) continue;
    auto cells = split_line(line);
    if (cells.size() != t.header.size())
      throw ConfigError("CSV row " + std::to_string(t.rows.size() + 1) + " has " +
                        std::to_string(cells.size()) + " cells, header has " +
                        std::to_string(t.header.size()));
    t.rows.push_back(std::move(cells));
  }
  return t;
}

std::vector<IterationRecord> read_learning_csv(std::istream& in) {
  const CsvTable t = read_csv(in);
  std::vector<std::string> want;
  boost::split(want, std::string(kLearningHeader), boost::is_any_of(","));
  expect_header(t.header, want);
  if (t.header.size() != want.size()) throw ConfigError("unexpected extra columns");
  std::vector<IterationRecord> out;
  for (const auto& c : t.rows) {
    IterationRecord r;
    r.k = to_count(c[0], want[0]);
    r.avg_return = to_double(c[1], want[1]);
    r.return_ci95 = to_double(c[2], want[2]);
    r.grad_norm = to_double(c[3], want[3]);
    r.est_variance = to_double(c[4], want[4]);
    r.kl_estimate = to_double(c[5], want[5]);
    r.beta_used = to_double(c[6], want[6]);
    r.cum_trajectories = to_count(c[7], want[7]);
    out.push_back(r);
  }
  return out;
}

std::vector<VarianceGapRow> read_variance_gap_csv(std::istream& in, std::string* param_name) {
  const CsvTable t = read_csv(in);
  std::vector<std::string> want;
  boost::split(want, std::string(kVarianceGapHeaderPrefix), boost::is_any_of(","));
  expect_header(t.header, want);
  if (t.header.size() != want.size() + 1)
    throw ConfigError("variance-gap CSV needs exactly one swept-parameter column");
  if (param_name) *param_name = t.header.back();
  std::vector<VarianceGapRow> out;
  for (const auto& c : t.rows) {
    VarianceGapRow r;
    r.dvar = to_double(c[0], want[0]);
    r.dvar_minus = to_double(c[1], want[1]);
    r.dvar_plus = to_double(c[2], want[2]);
    if (c[3] != "True" && c[3] != "False")
      throw ConfigError("column 'biased': expected True or False, got '" + c[3] + "'");
    r.biased = c[3] == "True";
    r.beta = to_double(c[4], want[4]);
    r.n_bpo = to_count(c[5], want[5]);
    r.n_pg = to_count(c[6], want[6]);
    r.param = to_double(c[7], t.header.back());
    out.push_back(r);
  }
  return out;
}

}  // namespace bpo
