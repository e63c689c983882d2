#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "bpo/driver.hpp"

namespace bpo {

inline constexpr std::string_view kLearningHeader =
    "k,avg_return,return_ci95,grad_norm,est_variance,kl_estimate,beta_used,cum_trajectories";
inline constexpr std::string_view kVarianceGapHeaderPrefix =
    "dvar,dvar_minus,dvar_plus,biased,beta,n_bpo,n_pg";

// 9 significant digits.
std::string format_double(double x);

void write_learning_csv(std::ostream& out, const std::vector<IterationRecord>& records);
void write_variance_gap_csv(std::ostream& out, const std::vector<VarianceGapRow>& rows,
                            SweptParam param);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

// Plain comma-separated reader (no quoting). Throws ConfigError on rows whose
// width differs from the header.
CsvTable read_csv(std::istream& in);

// Both readers throw ConfigError naming the first mismatching column.
std::vector<IterationRecord> read_learning_csv(std::istream& in);
std::vector<VarianceGapRow> read_variance_gap_csv(std::istream& in, std::string* param_name);

}  // namespace bpo
