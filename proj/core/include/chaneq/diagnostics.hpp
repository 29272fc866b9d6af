#pragma once

// Measurements on trained layers: inhibited channels, cumulative channel
// ablation, per-location channel magnitude and inter-channel correlation.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "chaneq/tensor.hpp"

namespace chaneq {

inline constexpr double kInhibitedThreshold = 1e-2;

struct ChannelReport {
  Vector magnitude;
  std::vector<bool> inhibited;  ///< magnitude < threshold
  double threshold = kInhibitedThreshold;

  double ratio() const;
};

/// magnitude_c = mean over every (n, i, j) of |y_ncij| across the collection.
/// Throws ContractError for an empty collection or mixed channel counts.
ChannelReport inhibited_ratio(std::span<const FeatureMap> activations,
                              double threshold = kInhibitedThreshold);

/// Same report with |gamma_c| as the magnitude.
ChannelReport gamma_report(std::span<const double> gamma, double threshold = kInhibitedThreshold);

struct AblationCurve {
  Vector ratios;
  Vector accuracy_mean;
  Vector accuracy_std;
  std::size_t trials = 0;
  std::uint64_t seed = 0;
};

/// Accuracy of the model with the listed channels zeroed at the chosen layer.
using AblationEval = std::function<double(const std::vector<std::size_t>& zeroed)>;

/// For every ratio, `trials` draws of floor(ratio * C) channels without
/// replacement; the draw for (ratio k, trial t) comes from Rng(seed).derive(k, t),
/// so the curve is a function of (seed, trials) alone.
AblationCurve cumulative_ablation(const AblationEval& eval, std::size_t channels,
                                  std::span<const double> ratios, std::size_t trials,
                                  std::uint64_t seed);

/// (H, W) map of mean over n of |x_{n,:,i,j}|_2.
Matrix channel_magnitude_map(const FeatureMap& x);

/// Mean |off-diagonal| Pearson correlation over the C x (N*H*W) flattening.
double correlation_summary(const FeatureMap& x);

/// `ratio,accuracy_mean,accuracy_std,trials,seed`
std::string ablation_csv(const AblationCurve& curve);
/// `channel,magnitude,inhibited`
std::string report_csv(const ChannelReport& report);

}  // namespace chaneq
