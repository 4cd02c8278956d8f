#include <algorithm>
#include <cstdio>
#include <sstream>

#include "adapterlab/analysis.hpp"

namespace adapterlab {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

// Quotes a field when it holds a comma or quote.
std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

}  // namespace

void SweepReport::sort_rows() {
  std::stable_sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
    if (a.strategy != b.strategy) return a.strategy < b.strategy;
    return a.trained_param_count < b.trained_param_count;
  });
}

std::string SweepReport::to_csv() const {
  std::ostringstream os;
  for (const auto& [k, v] : metadata) os << "# " << k << '=' << v << '\n';
  os << "strategy,hyperparameters,trained_param_count,total_param_count,trained_fraction,metric,seed\n";
  for (const auto& r : rows) {
    std::string hp;
    for (const auto& [k, v] : r.hyperparameters) {
      if (!hp.empty()) hp += ';';
      hp += k + '=' + v;
    }
    os << csv_field(r.strategy) << ',' << csv_field(hp) << ',' << r.trained_param_count << ',' << r.total_param_count
       << ',' << num(r.trained_fraction) << ',' << num(r.metric) << ',' << r.seed << '\n';
  }
  return os.str();
}

std::string bands_csv(const std::vector<PercentileBand>& bands) {
  std::ostringstream os;
  os << "method,budget,count,p20,p50,p80\n";
  for (const auto& b : bands) {
    os << csv_field(b.method) << ',' << num(b.budget) << ',' << b.count << ',' << num(b.p20) << ',' << num(b.p50)
       << ',' << num(b.p80) << '\n';
  }
  return os.str();
}

}  // namespace adapterlab
