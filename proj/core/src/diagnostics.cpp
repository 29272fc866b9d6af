#include "chaneq/diagnostics.hpp"

#include <algorithm>
#include <cmath>

#include "chaneq/error.hpp"
#include "chaneq/io.hpp"
#include "chaneq/rng.hpp"

namespace chaneq {

double ChannelReport::ratio() const {
  if (inhibited.empty()) return 0.0;
  const auto n = std::count(inhibited.begin(), inhibited.end(), true);
  return static_cast<double>(n) / static_cast<double>(inhibited.size());
}

ChannelReport inhibited_ratio(std::span<const FeatureMap> activations, double threshold) {
  if (activations.empty()) throw ContractError("inhibited_ratio: empty evaluation set");
  const std::size_t C = activations.front().channels();
  ChannelReport rep;
  rep.threshold = threshold;
  rep.magnitude.assign(C, 0.0);
  double count = 0.0;
  for (const FeatureMap& y : activations) {
    if (y.channels() != C) throw ContractError("inhibited_ratio: channel counts differ");
    for (std::size_t n = 0; n < y.batch(); ++n)
      for (std::size_t c = 0; c < C; ++c)
        for (double v : y.plane(n, c)) rep.magnitude[c] += std::abs(v);
    count += static_cast<double>(y.batch() * y.shape().plane());
  }
  rep.inhibited.resize(C);
  for (std::size_t c = 0; c < C; ++c) {
    rep.magnitude[c] /= count;
    rep.inhibited[c] = rep.magnitude[c] < threshold;
  }
  return rep;
}

ChannelReport gamma_report(std::span<const double> gamma, double threshold) {
  ChannelReport rep;
  rep.threshold = threshold;
  for (double g : gamma) {
    rep.magnitude.push_back(std::abs(g));
    rep.inhibited.push_back(std::abs(g) < threshold);
  }
  return rep;
}

AblationCurve cumulative_ablation(const AblationEval& eval, std::size_t channels,
                                  std::span<const double> ratios, std::size_t trials,
                                  std::uint64_t seed) {
  if (trials == 0) throw ContractError("cumulative_ablation: trials must be >= 1");
  for (std::size_t k = 0; k < ratios.size(); ++k) {
    if (!(ratios[k] >= 0.0 && ratios[k] <= 1.0)) {
      throw ContractError("cumulative_ablation: ratios must lie in [0, 1]");
    }
    if (k > 0 && !(ratios[k] > ratios[k - 1])) {
      throw ContractError("cumulative_ablation: ratios must be strictly increasing");
    }
  }
  AblationCurve curve;
  curve.trials = trials;
  curve.seed = seed;
  const Rng root(seed);
  for (std::size_t k = 0; k < ratios.size(); ++k) {
    const auto drop = static_cast<std::size_t>(
        std::floor(ratios[k] * static_cast<double>(channels) + 1e-9));
    std::vector<double> acc;
    for (std::size_t t = 0; t < trials; ++t) {
      Rng rng = root.derive(k).derive(t);
      std::vector<std::size_t> zeroed = rng.sample_without_replacement(channels, drop);
      std::sort(zeroed.begin(), zeroed.end());
      acc.push_back(eval(zeroed));
    }
    double mean = 0.0;
    for (double a : acc) mean += a;
    mean /= static_cast<double>(trials);
    double var = 0.0;
    for (double a : acc) var += (a - mean) * (a - mean);
    curve.ratios.push_back(ratios[k]);
    curve.accuracy_mean.push_back(mean);
    curve.accuracy_std.push_back(trials > 1 ? std::sqrt(var / static_cast<double>(trials - 1)) : 0.0);
  }
  return curve;
}

Matrix channel_magnitude_map(const FeatureMap& x) {
  const auto& s = x.shape();
  Matrix out(s.h, s.w);
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t i = 0; i < s.h; ++i)
      for (std::size_t j = 0; j < s.w; ++j) {
        double sq = 0.0;
        for (std::size_t c = 0; c < s.c; ++c) sq += x.at(n, c, i, j) * x.at(n, c, i, j);
        out(i, j) += std::sqrt(sq);
      }
  out *= 1.0 / static_cast<double>(s.n);
  return out;
}

double correlation_summary(const FeatureMap& x) {
  const std::size_t C = x.channels();
  if (C < 2) return 0.0;
  Matrix m = channel_matrix(x);
  const std::size_t M = m.cols();
  Vector sd(C);
  for (std::size_t c = 0; c < C; ++c) {
    auto row = m.row(c);
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= static_cast<double>(M);
    double var = 0.0;
    for (double& v : row) {
      v -= mean;
      var += v * v;
    }
    sd[c] = std::sqrt(var / static_cast<double>(M) + 1e-12);
  }
  double total = 0.0;
  for (std::size_t a = 0; a < C; ++a)
    for (std::size_t b = a + 1; b < C; ++b) {
      const double cov = dot(m.row(a), m.row(b)) / static_cast<double>(M);
      total += std::min(1.0, std::abs(cov / (sd[a] * sd[b])));
    }
  return total / static_cast<double>(C * (C - 1) / 2);
}

std::string ablation_csv(const AblationCurve& curve) {
  CsvWriter csv({"ratio", "accuracy_mean", "accuracy_std", "trials", "seed"});
  for (std::size_t k = 0; k < curve.ratios.size(); ++k)
    csv.row({format_number(curve.ratios[k]), format_number(curve.accuracy_mean[k]),
             format_number(curve.accuracy_std[k]), std::to_string(curve.trials),
             std::to_string(curve.seed)});
  return csv.str();
}

std::string report_csv(const ChannelReport& report) {
  CsvWriter csv({"channel", "magnitude", "inhibited"});
  for (std::size_t c = 0; c < report.magnitude.size(); ++c)
    csv.row({std::to_string(c), format_number(report.magnitude[c]),
             report.inhibited[c] ? "1" : "0"});
  return csv.str();
}

}  // namespace chaneq
