#pragma once

#include <span>
#include <string>
#include <vector>

#include "ff/transport.hpp"
#include "ff/tree.hpp"

namespace ff {

/// Fraction of exact class matches.
double accuracy(std::span<const double> predictions, std::span<const double> labels);

double rmse(std::span<const double> predictions, std::span<const double> labels);

double mean(std::span<const double> values);
/// Sample standard deviation (n - 1 denominator).
double sample_stddev(std::span<const double> values);

struct ZTestResult {
  double z = 0.0;
  double p_value = 1.0;
  double mean_a = 0.0;
  double mean_b = 0.0;
};

/// Two-sample z-test with pooled standard error; null hypothesis: equal
/// means. Requires two or more observations per sample.
ZTestResult two_sample_z_test(std::span<const double> a, std::span<const double> b);

/// One stats line: {"phase":..., "p2p":..., "broadcasts":..., "gathers":...,
/// "payload_ids":...}
std::string stats_json_line(const std::string& phase, const MessageStats& stats);

struct StatsLine {
  std::string phase;
  MessageStats stats;
};

void write_stats_jsonl(const std::string& path, std::span<const StatsLine> lines);
std::vector<StatsLine> read_stats_jsonl(const std::string& path);

}  // namespace ff
