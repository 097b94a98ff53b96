// Copyright 2026 The hdyn Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Metrics rows, CSV I/O and summary statistics.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

namespace hdyn {

struct MetricsRow {
  std::string method;
  std::string split;
  std::string metric;
  double value = 0.0;
  std::uint64_t seed = 0;
  std::int64_t step = 0;
};

inline constexpr const char* kMetricsHeader = "method,split,metric,value,seed,step";

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string out = std::string(kMetricsHeader) + "\n";
  for (const auto& r : rows) {
    out += r.method + "," + r.split + "," + r.metric + "," + format_double(r.value) + "," +
           std::to_string(r.seed) + "," + std::to_string(r.step) + "\n";
  }
  return out;
}

inline std::vector<MetricsRow> parse_metrics_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != kMetricsHeader) {
    throw std::runtime_error("metrics: missing header '" + std::string(kMetricsHeader) + "'");
  }
  std::vector<MetricsRow> rows;
  int n = 1;
  while (std::getline(is, line)) {
    ++n;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string item;
    while (std::getline(ss, item, ',')) f.push_back(item);
    if (f.size() != 6) throw std::runtime_error("metrics: line " + std::to_string(n) + ": 6 fields expected");
    try {
      rows.push_back({f[0], f[1], f[2], std::stod(f[3]), std::stoull(f[4]), std::stoll(f[5])});
    } catch (const std::exception&) {
      throw std::runtime_error("metrics: line " + std::to_string(n) + ": bad number");
    }
  }
  return rows;
}

struct Stats {
  double mean = 0.0;
  double std = 0.0;
  double median = 0.0;
  std::size_t n = 0;
};

inline double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

inline Stats stats_of(const std::vector<double>& v) {
  Stats s;
  s.n = v.size();
  if (v.empty()) return s;
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  for (double x : v) s.std += (x - s.mean) * (x - s.mean);
  s.std = std::sqrt(s.std / static_cast<double>(v.size()));
  s.median = median(v);
  return s;
}

// Values of one (method, split, metric) across seeds, at the last step each
// seed reported.
inline std::vector<double> final_values(const std::vector<MetricsRow>& rows,
                                        const std::string& method, const std::string& split,
                                        const std::string& metric) {
  std::map<std::uint64_t, std::pair<std::int64_t, double>> last;
  for (const auto& r : rows) {
    if (r.method != method || r.split != split || r.metric != metric) continue;
    auto it = last.find(r.seed);
    if (it == last.end() || r.step >= it->second.first) last[r.seed] = {r.step, r.value};
  }
  std::vector<double> v;
  for (const auto& [_, sv] : last) v.push_back(sv.second);
  return v;
}

// {metric: {method: {split: {mean, std, median, n}}}} over final values.
inline nlohmann::ordered_json summary_json(const std::vector<MetricsRow>& rows) {
  std::vector<std::tuple<std::string, std::string, std::string>> keys;
  for (const auto& r : rows) {
    auto k = std::make_tuple(r.metric, r.method, r.split);
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
  }
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [metric, method, split] : keys) {
    const Stats s = stats_of(final_values(rows, method, split, metric));
    j[metric][method][split] = {{"mean", s.mean}, {"std", s.std}, {"median", s.median}, {"n", s.n}};
  }
  return j;
}

}  // namespace hdyn
