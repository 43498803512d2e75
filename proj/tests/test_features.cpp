#include <cmath>

#include "cbanet/features.hpp"
#include "cbanet/synthetic.hpp"
#include "doctest.h"

using namespace cbanet;

namespace {

TelemetrySession tiny_session(std::initializer_list<TelemetrySample> samples) {
  TelemetrySession s;
  s.sample_rate_hz = 25.0;
  s.samples = samples;
  return s;
}

}  // namespace

TEST_CASE("engineer_features: hand-evaluated channels") {
  TelemetrySession s = tiny_session({
      {0.00, 20.0, 2.0, 0.3, 0.0, 0.4},
      {0.04, 20.0, -4.0, 0.3, 0.5, 0.0},
      {0.08, 19.8, -1.0, 0.5, 0.2, 0.0},
  });
  const FeatureFrame f = engineer_features(s);
  REQUIRE(f.size() == 3);

  // positive acceleration: deceleration-derived channels are zero
  CHECK(f.at(FeatureChannel::ALongNeg, 0) == 0.0);
  CHECK(f.at(FeatureChannel::PDecel, 0) == 0.0);
  CHECK(f.at(FeatureChannel::BEngage, 0) == 0.0);

  // v = 20, a_long = -4, brake = 0.5
  CHECK(f.at(FeatureChannel::ALongNeg, 1) == 4.0);
  CHECK(f.at(FeatureChannel::PDecel, 1) == doctest::Approx(80.0));
  CHECK(f.at(FeatureChannel::BEngage, 1) == doctest::Approx(2.0));

  // raw channels pass through
  CHECK(f.at(FeatureChannel::Speed, 2) == 19.8);
  CHECK(f.at(FeatureChannel::Brake, 1) == 0.5);
  CHECK(f.at(FeatureChannel::Throttle, 0) == 0.4);

  // turn sharpness is a first difference with zero start
  CHECK(f.at(FeatureChannel::TurnSharpness, 0) == 0.0);
  CHECK(f.at(FeatureChannel::TurnSharpness, 1) == 0.0);
  CHECK(f.at(FeatureChannel::TurnSharpness, 2) == doctest::Approx(0.2));
}

TEST_CASE("engineer_features: constant a_lat gives flat smooth channel") {
  TelemetrySession s;
  s.sample_rate_hz = 25.0;
  for (int i = 0; i < 20; ++i) {
    s.samples.push_back({i * 0.04, 15.0, 0.0, 0.7, 0.0, 0.1});
  }
  const FeatureFrame f = engineer_features(s);
  for (size_t t = 0; t < f.size(); ++t) {
    CHECK(f.at(FeatureChannel::ALatSmooth, t) == doctest::Approx(0.7).epsilon(1e-12));
    if (t >= 1) CHECK(f.at(FeatureChannel::TurnSharpness, t) == 0.0);
  }
}

TEST_CASE("engineer_features: causal and decel channels vanish when a_long >= 0") {
  SyntheticSpec spec;
  spec.duration_s = 20.0;
  spec.noise_sigma = {0.05, 0.2, 0.2, 0.01, 0.01};
  spec.planted_events.push_back({EventClass::HarshBrake, 8.0, 1.2, 0.5});
  spec.seed = 3;
  auto [session, truth] = generate_synthetic_session(spec);
  const FeatureFrame full = engineer_features(session);

  for (size_t t = 0; t < session.size(); ++t) {
    if (session.samples[t].a_long >= 0.0) {
      CHECK(full.at(FeatureChannel::PDecel, t) == 0.0);
      CHECK(full.at(FeatureChannel::BEngage, t) == 0.0);
    }
  }

  // mutate the future, prefix output must not move
  TelemetrySession mutated = session;
  for (size_t t = 300; t < mutated.size(); ++t) {
    mutated.samples[t].a_lat += 3.0;
    mutated.samples[t].speed += 1.0;
  }
  const FeatureFrame prefix = engineer_features(mutated);
  for (size_t t = 0; t < 300; ++t) {
    for (int c = 0; c < kNumChannels; ++c) {
      CHECK(full.channels[c][t] == prefix.channels[c][t]);
    }
  }
}

TEST_CASE("fit_normalizer: population convention and degenerate floor") {
  FeatureFrame f;
  f.tag = SplitTag::Train;
  for (int c = 0; c < kNumChannels; ++c) f.channels[c] = {1.0, 3.0};
  f.channels[3] = {2.5, 2.5};  // constant channel

  const NormStats stats = fit_normalizer({f});
  CHECK(stats.mean[0] == doctest::Approx(2.0));
  CHECK(stats.stddev[0] == doctest::Approx(1.0));  // population sigma of {1,3}
  CHECK(stats.mean[3] == doctest::Approx(2.5));
  CHECK(stats.stddev[3] == 1e-8);

  const FeatureFrame z = apply_normalizer(f, stats);
  CHECK(z.channels[3][0] == 0.0);
  CHECK(z.channels[3][1] == 0.0);
  CHECK(z.channels[0][0] == doctest::Approx(-1.0));
  CHECK(z.channels[0][1] == doctest::Approx(1.0));
}

TEST_CASE("fit_normalizer: train-applied stats give mean 0 variance 1") {
  SyntheticSpec spec;
  spec.duration_s = 30.0;
  spec.noise_sigma = {0.1, 0.3, 0.3, 0.02, 0.02};
  spec.planted_events.push_back({EventClass::HarshTurn, 12.0, 3.0, 0.65});
  spec.seed = 9;
  auto [s1, t1] = generate_synthetic_session(spec);
  spec.seed = 10;
  auto [s2, t2] = generate_synthetic_session(spec);

  FeatureFrame f1 = engineer_features(s1);
  FeatureFrame f2 = engineer_features(s2);
  f1.tag = SplitTag::Train;
  f2.tag = SplitTag::Train;
  const std::vector<FeatureFrame> pool = {f1, f2};
  const NormStats stats = fit_normalizer(pool);

  for (int c = 0; c < kNumChannels; ++c) {
    double sum = 0.0, sq = 0.0;
    size_t n = 0;
    for (const FeatureFrame& f : pool) {
      const FeatureFrame z = apply_normalizer(f, stats);
      for (double v : z.channels[c]) {
        sum += v;
        sq += v * v;
        ++n;
      }
    }
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    CHECK(std::abs(mean) < 1e-9);
    CHECK(std::abs(var - 1.0) < 1e-9);
  }
}

TEST_CASE("apply_normalizer: centering, scaling, inversion") {
  NormStats stats;
  for (int c = 0; c < kNumChannels; ++c) {
    stats.mean[c] = 0.5 * c;
    stats.stddev[c] = 1.0 + 0.25 * c;
  }
  FeatureFrame f;
  for (int c = 0; c < kNumChannels; ++c) {
    f.channels[c] = {stats.mean[c], stats.mean[c] + stats.stddev[c], -1.75};
  }
  const FeatureFrame z = apply_normalizer(f, stats);
  for (int c = 0; c < kNumChannels; ++c) {
    CHECK(z.channels[c][0] == doctest::Approx(0.0));
    CHECK(z.channels[c][1] == doctest::Approx(1.0));
    const double back = z.channels[c][2] * stats.stddev[c] + stats.mean[c];
    CHECK(back == doctest::Approx(-1.75).epsilon(1e-12));
  }
}

TEST_CASE("fit_normalizer: refuses non-train frames and empty pools") {
  FeatureFrame val;
  val.tag = SplitTag::Validation;
  for (auto& ch : val.channels) ch = {1.0, 2.0};
  CHECK_THROWS_AS(fit_normalizer({val}), Error);

  try {
    fit_normalizer({});
    FAIL("expected an Error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyTrainingPool);
  }
}

TEST_CASE("norm stats JSON round trip") {
  NormStats stats;
  for (int c = 0; c < kNumChannels; ++c) {
    stats.mean[c] = 0.125 * c - 3.0;
    stats.stddev[c] = 1e-8 + 0.5 * c;
  }
  stats.fitted_on = "train";
  save_norm_stats(stats, "./t_norm.json");
  const NormStats back = load_norm_stats("./t_norm.json");
  CHECK(back.fitted_on == "train");
  for (int c = 0; c < kNumChannels; ++c) {
    CHECK(back.mean[c] == doctest::Approx(stats.mean[c]).epsilon(1e-12));
    CHECK(back.stddev[c] == doctest::Approx(stats.stddev[c]).epsilon(1e-12));
  }
}
