#pragma once

#include <cstddef>
#include <stdexcept>
#include <utility>
#include <vector>

#include "mpslam/geometry.hpp"
#include "mpslam/measurement_model.hpp"
#include "mpslam/rng.hpp"
#include "mpslam/scenario.hpp"

// Synthetic measurement generation. Feature index 0 is the anchor's direct
// path; index i >= 1 is VA i-1 in enumeration order. Draw order per anchor:
// features in that order (detection, then amplitude, range, angle), then the
// false-alarm count, false-alarm attributes, and finally one permutation.
// Occluded features emit nothing and consume no draws.

namespace mpslam {

struct FeatureTruth {
  int feature_index = 0;
  Point2 position;
  double range = 0.0;
  double aoa = 0.0;
  double amplitude = 0.0;
  bool visible = false;
  bool detected = false;
  int measurement_index = -1;  // into the anchor's permuted measurement list
};

struct EpochTruth {
  std::vector<std::vector<FeatureTruth>> features;  // per anchor
  // per anchor, per measurement: originating feature index, -1 = false alarm
  std::vector<std::vector<int>> source;
};

// Positions a perfect mapper would recover for one anchor: the anchor itself
// plus every mirror image.
inline std::vector<Point2> anchor_feature_positions(const Scenario& sc,
                                                    std::size_t anchor_idx) {
  const Anchor& anchor = sc.anchors.at(anchor_idx);
  std::vector<Point2> out{anchor.position};
  for (const auto& va : enumerate_vas(sc.floorplan, anchor, sc.va_max_order)) {
    out.push_back(va.position);
  }
  return out;
}

inline bool feature_visible(const Scenario& sc, std::size_t anchor_idx,
                            int feature_index, const Point2& agent) {
  if (feature_index == 0) return true;  // direct path: clear by construction
  if (!sc.enforce_visibility) return true;
  const auto vas =
      enumerate_vas(sc.floorplan, sc.anchors.at(anchor_idx), sc.va_max_order);
  const auto& va = vas.at(static_cast<std::size_t>(feature_index) - 1);
  return reflection_visible(agent, va, sc.floorplan);
}

inline std::pair<std::vector<std::vector<Measurement>>, EpochTruth>
simulate_epoch(const Scenario& sc, std::size_t n, Rng& rng) {
  if (n >= sc.track.size()) {
    throw std::out_of_range("simulate_epoch: step index beyond track");
  }
  const Point2 agent = sc.track[n];
  const double two_pi = 6.28318530717958647692;

  std::vector<std::vector<Measurement>> sets(sc.anchors.size());
  EpochTruth truth;
  truth.features.resize(sc.anchors.size());
  truth.source.resize(sc.anchors.size());

  for (std::size_t a = 0; a < sc.anchors.size(); ++a) {
    const Anchor& anchor = sc.anchors[a];
    const auto vas = enumerate_vas(sc.floorplan, anchor, sc.va_max_order);

    std::vector<Measurement> pending;
    std::vector<int> pending_source;

    for (std::size_t f = 0; f <= vas.size(); ++f) {
      FeatureTruth ft;
      ft.feature_index = static_cast<int>(f);
      if (f == 0) {
        ft.position = anchor.position;
        ft.visible = true;
      } else {
        const auto& va = vas[f - 1];
        ft.position = va.position;
        ft.visible = !sc.enforce_visibility ||
                     reflection_visible(agent, va, sc.floorplan);
      }
      if (ft.visible) {
        const auto ra = range_aoa(agent, ft.position);
        ft.range = ra.range;
        ft.aoa = ra.aoa;
        ft.amplitude =
            amplitude_from_distance(ra.range, sc.amplitude.u_ref, sc.amplitude.d_ref);
        const double pd = detection_probability(ft.amplitude, sc.noise.gamma);
        ft.detected = rng.bernoulli(pd);
        if (ft.detected) {
          Measurement z;
          z.amplitude = rng.rician_truncated(ft.amplitude, sc.noise.gamma);
          z.range = ft.range + (sc.noise.sigma_d0 / z.amplitude) * rng.normal();
          z.aoa = wrap_angle(ft.aoa + (sc.noise.sigma_phi0 / z.amplitude) * rng.normal());
          pending.push_back(z);
          pending_source.push_back(ft.feature_index);
        }
      }
      truth.features[a].push_back(ft);
    }

    const std::uint64_t fa_count = rng.poisson(sc.false_alarms.mean);
    for (std::uint64_t c = 0; c < fa_count; ++c) {
      Measurement z;
      z.range = rng.uniform(sc.false_alarms.range_lo, sc.false_alarms.range_hi);
      z.aoa = rng.uniform(-two_pi / 2.0, two_pi / 2.0);
      z.amplitude = rng.rayleigh_truncated(sc.noise.gamma);
      pending.push_back(z);
      pending_source.push_back(-1);
    }

    // Fisher-Yates; consumes draws only when there is something to permute
    for (std::size_t i = pending.size(); i > 1; --i) {
      const std::size_t j = rng.index(i);
      std::swap(pending[i - 1], pending[j]);
      std::swap(pending_source[i - 1], pending_source[j]);
    }

    for (std::size_t m = 0; m < pending.size(); ++m) {
      if (pending_source[m] >= 0) {
        truth.features[a][static_cast<std::size_t>(pending_source[m])]
            .measurement_index = static_cast<int>(m);
      }
    }
    sets[a] = std::move(pending);
    truth.source[a] = std::move(pending_source);
  }
  return {std::move(sets), truth};
}

}  // namespace mpslam
