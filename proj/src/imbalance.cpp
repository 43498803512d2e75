#include "cbanet/imbalance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace cbanet {

namespace {

double squared_distance(const double* a, const double* b, size_t n) {
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

}  // namespace

WindowSet smote_oversample(const WindowSet& train, const SmoteConfig& cfg) {
  if (train.split_tag != "train") {
    throw Error(ErrorCode::NotTrainingSplit,
                "oversampling a set tagged '" + train.split_tag + "'");
  }
  if (cfg.k_neighbors < 1) throw Error(ErrorCode::InvalidConfig, "k_neighbors must be >= 1");
  if (!(cfg.target_fraction > 0.0 && cfg.target_fraction <= 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "target_fraction must lie in (0, 1]");
  }

  const std::array<size_t, kNumClasses> counts = class_counts(train);
  const size_t majority = *std::max_element(counts.begin(), counts.end());
  const size_t target =
      static_cast<size_t>(std::ceil(cfg.target_fraction * static_cast<double>(majority)));

  WindowSet out = train;  // originals verbatim, in order
  const size_t dim = train.window_values();

  for (int c = 0; c < kNumClasses; ++c) {
    if (counts[c] >= target) continue;
    if (counts[c] < 2) {
      throw Error(ErrorCode::DegenerateClass,
                  std::string("class ") + class_name(static_cast<EventClass>(c)) + " has " +
                      std::to_string(counts[c]) + " windows, cannot interpolate");
    }
    std::vector<size_t> members;
    for (size_t i = 0; i < train.size(); ++i) {
      if (train.labels[i] == static_cast<EventClass>(c)) members.push_back(i);
    }
    const size_t m = members.size();
    const int k = std::min<size_t>(cfg.k_neighbors, m - 1);

    // k nearest same-class neighbors per member, ties broken by index
    std::vector<std::vector<size_t>> neighbors(m);
    std::vector<std::pair<double, size_t>> dists(m - 1);
    for (size_t a = 0; a < m; ++a) {
      size_t pos = 0;
      for (size_t b = 0; b < m; ++b) {
        if (b == a) continue;
        dists[pos++] = {squared_distance(train.window_data(members[a]),
                                         train.window_data(members[b]), dim),
                        members[b]};
      }
      std::partial_sort(dists.begin(), dists.begin() + k, dists.end());
      neighbors[a].reserve(k);
      for (int j = 0; j < k; ++j) neighbors[a].push_back(dists[j].second);
    }

    std::mt19937_64 rng(derive_seed(cfg.seed, SeedRole::Smote, static_cast<uint64_t>(c)));
    std::uniform_int_distribution<size_t> pick_member(0, m - 1);
    std::uniform_int_distribution<int> pick_neighbor(0, k - 1);
    std::uniform_real_distribution<double> pick_lambda(0.0, 1.0);

    for (size_t need = target - counts[c]; need > 0; --need) {
      const size_t a = pick_member(rng);
      const size_t base = members[a];
      const size_t nn = neighbors[a][pick_neighbor(rng)];
      const double lambda = pick_lambda(rng);
      const double* x = train.window_data(base);
      const double* y = train.window_data(nn);
      for (size_t v = 0; v < dim; ++v) {
        out.features.push_back(x[v] + lambda * (y[v] - x[v]));
      }
      out.labels.push_back(static_cast<EventClass>(c));
      out.session_ids.push_back("smote");
      out.driver_ids.push_back("smote");
      out.start_t.push_back(-1.0);
      out.synthetic.push_back(1);
      out.provenance.push_back({static_cast<int64_t>(base), static_cast<int64_t>(nn), lambda});
    }
  }
  return out;
}

ClassWeights compute_class_weights(const std::array<size_t, kNumClasses>& counts,
                                   const std::array<double, kNumClasses>& boost) {
  size_t total = 0;
  for (int c = 0; c < kNumClasses; ++c) {
    if (counts[c] == 0) {
      throw Error(ErrorCode::EmptyClass,
                  std::string("class ") + class_name(static_cast<EventClass>(c)) + " has no windows");
    }
    total += counts[c];
  }
  ClassWeights weights;
  double sum = 0.0;
  for (int c = 0; c < kNumClasses; ++c) {
    weights.weight[c] = static_cast<double>(total) /
                        (static_cast<double>(kNumClasses) * static_cast<double>(counts[c]));
    weights.weight[c] *= boost[c];
    sum += weights.weight[c];
  }
  const double mean = sum / kNumClasses;
  for (double& w : weights.weight) w /= mean;
  weights.normalized = true;
  return weights;
}

}  // namespace cbanet
