#include "ff/metrics.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ff/errors.hpp"

namespace ff {

double accuracy(std::span<const double> predictions, std::span<const double> labels) {
  if (predictions.size() != labels.size() || predictions.empty()) {
    throw DataError("accuracy: size mismatch or empty input");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (std::lround(predictions[i]) == std::lround(labels[i])) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

double rmse(std::span<const double> predictions, std::span<const double> labels) {
  if (predictions.size() != labels.size() || predictions.empty()) {
    throw DataError("rmse: size mismatch or empty input");
  }
  double sq = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double d = predictions[i] - labels[i];
    sq += d * d;
  }
  return std::sqrt(sq / static_cast<double>(predictions.size()));
}

double mean(std::span<const double> values) {
  if (values.empty()) throw DataError("mean: empty input");
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

double sample_stddev(std::span<const double> values) {
  if (values.size() < 2) throw DataError("sample_stddev: needs >= 2 values");
  const double m = mean(values);
  double sq = 0.0;
  for (double v : values) {
    const double d = v - m;
    sq += d * d;
  }
  return std::sqrt(sq / static_cast<double>(values.size() - 1));
}

ZTestResult two_sample_z_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw DataError("z-test: needs >= 2 observations per sample");
  ZTestResult result;
  result.mean_a = mean(a);
  result.mean_b = mean(b);
  const double sa = sample_stddev(a);
  const double sb = sample_stddev(b);
  const auto na = static_cast<double>(a.size());
  const auto nb = static_cast<double>(b.size());
  const double pooled_var =
      ((na - 1.0) * sa * sa + (nb - 1.0) * sb * sb) / (na + nb - 2.0);
  const double se = std::sqrt(pooled_var * (1.0 / na + 1.0 / nb));
  if (se == 0.0) {
    result.z = 0.0;
    result.p_value = result.mean_a == result.mean_b ? 1.0 : 0.0;
    return result;
  }
  result.z = (result.mean_a - result.mean_b) / se;
  // Phi(x) = erfc(-x / sqrt(2)) / 2; two-sided p.
  result.p_value = std::erfc(std::fabs(result.z) / std::sqrt(2.0));
  return result;
}

std::string stats_json_line(const std::string& phase, const MessageStats& stats) {
  nlohmann::ordered_json j;
  j["phase"] = phase;
  j["p2p"] = stats.point_to_point;
  j["broadcasts"] = stats.broadcasts;
  j["gathers"] = stats.gathers;
  j["payload_ids"] = stats.total_payload_ids;
  return j.dump();
}

void write_stats_jsonl(const std::string& path, std::span<const StatsLine> lines) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write stats file: " + path);
  for (const auto& line : lines) {
    out << stats_json_line(line.phase, line.stats) << '\n';
  }
}

std::vector<StatsLine> read_stats_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open stats file: " + path);
  std::vector<StatsLine> lines;
  std::string text;
  while (std::getline(in, text)) {
    if (text.empty()) continue;
    const auto j = nlohmann::json::parse(text);
    StatsLine line;
    line.phase = j.at("phase").get<std::string>();
    line.stats.point_to_point = j.at("p2p").get<std::uint64_t>();
    line.stats.broadcasts = j.at("broadcasts").get<std::uint64_t>();
    line.stats.gathers = j.at("gathers").get<std::uint64_t>();
    line.stats.total_payload_ids = j.at("payload_ids").get<std::uint64_t>();
    lines.push_back(std::move(line));
  }
  return lines;
}

}  // namespace ff
