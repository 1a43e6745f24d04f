#include <benchmark/benchmark.h>

#include <map>
#include <random>

#include "pogvins/gnss_rtk.hpp"
#include "pogvins/po_geometry.hpp"
#include "pogvins/sim.hpp"
#include "pogvins/so3.hpp"
#include "pogvins/swf_filter.hpp"

using namespace pogvins;

namespace {

/// Noise-free window of clones at truth with the tracks seen in it.
struct Window {
  ScenarioConfig config;
  FilterState fs;
  std::vector<FeatureTrack> tracks;

  static const Window& get() {
    static const Window w = [] {
      Window x;
      x.config.duration = 12.0;
      x.config = x.config.noise_free();
      const ScenarioDataset ds = generate(x.config);
      x.fs = make_filter_state(ds.truth.front(), MatX::Identity(15, 15) * 1e-4, 10);
      std::map<FeatureId, FeatureTrack> by_id;
      const int per = x.config.imu_ticks_per_frame();
      for (int f = 0; f < x.fs.window_size; ++f) {
        x.fs.nav = ds.truth[static_cast<std::size_t>(f * per)];
        augment_clone(x.fs, f);
        for (const auto& m : ds.frames[static_cast<std::size_t>(f)].features) {
          FeatureTrack& t = by_id[m.feature_id];
          t.feature_id = m.feature_id;
          t.observations[f] = {m.bearing, m.pixel};
        }
      }
      for (auto& [id, t] : by_id) {
        if (t.observations.size() >= 4) x.tracks.push_back(t);
      }
      return x;
    }();
    return w;
  }
};

void BM_PoDepths(benchmark::State& state) {
  const CameraPose a{Mat3::Identity(), Vec3::Zero()};
  const CameraPose b{so3_exp(Vec3(0.01, 0.05, -0.02)), Vec3(1.0, 0.1, 0.2)};
  const Vec3 pt(0.5, -0.3, 8.0);
  const RelativePose rel = relative_transform(a, b);
  const Vec3 qa = a.to_camera(pt);
  const Vec3 qb = b.to_camera(pt);
  const NormalizedBearing pa{qa.x() / qa.z(), qa.y() / qa.z()};
  const NormalizedBearing pb{qb.x() / qb.z(), qb.y() / qb.z()};
  for (auto _ : state) benchmark::DoNotOptimize(po_depths(rel, pa, pb));
}
BENCHMARK(BM_PoDepths);

void BM_PoTrackLinearization(benchmark::State& state) {
  const Window& w = Window::get();
  std::size_t k = 0;
  for (auto _ : state) {
    const FeatureTrack& t = w.tracks[k++ % w.tracks.size()];
    benchmark::DoNotOptimize(linearize_po_track(w.fs, t, w.config.intrinsics, w.config.camera, 1e-4));
  }
}
BENCHMARK(BM_PoTrackLinearization);

void BM_MsckfTrackLinearization(benchmark::State& state) {
  const Window& w = Window::get();
  std::size_t k = 0;
  for (auto _ : state) {
    const FeatureTrack& t = w.tracks[k++ % w.tracks.size()];
    try {
      benchmark::DoNotOptimize(linearize_msckf_track(w.fs, t, w.config.intrinsics, w.config.camera, 1e-4));
    } catch (const std::exception&) {
    }
  }
}
BENCHMARK(BM_MsckfTrackLinearization);

template <bool kPo>
void BM_VisualUpdate(benchmark::State& state) {
  const Window& w = Window::get();
  const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(state.range(0)), w.tracks.size());
  const std::vector<FeatureTrack> tracks(w.tracks.begin(), w.tracks.begin() + static_cast<long>(n));
  for (auto _ : state) {
    FilterState fs = w.fs;
    const UpdateReport r = kPo ? po_update(fs, tracks, w.config.intrinsics, w.config.camera)
                               : msckf_update(fs, tracks, w.config.intrinsics, w.config.camera);
    benchmark::DoNotOptimize(r.rows);
  }
}
BENCHMARK(BM_VisualUpdate<true>)->Name("BM_PoUpdate")->Arg(10)->Arg(40);
BENCHMARK(BM_VisualUpdate<false>)->Name("BM_MsckfUpdate")->Arg(10)->Arg(40);

void BM_LambdaFix(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 1.0);
  const MatX a = MatX::NullaryExpr(n, n, [&] { return g(rng); });
  const MatX q = 0.01 * (a * a.transpose() + MatX::Identity(n, n));
  VecX f(n);
  for (int k = 0; k < n; ++k) f(k) = 10.0 * g(rng);
  for (auto _ : state) benchmark::DoNotOptimize(lambda_fix(f, q));
}
BENCHMARK(BM_LambdaFix)->Arg(4)->Arg(8)->Arg(12);

void BM_PropagateFilter(benchmark::State& state) {
  const Window& w = Window::get();
  ImuSample a;
  a.specific_force = Vec3(0.1, 0.0, 9.8);
  ImuSample b = a;
  b.timestamp = 0.005;
  const NoiseParams noise;
  for (auto _ : state) {
    FilterState fs = w.fs;
    fs.nav.timestamp = 0.0;
    propagate_filter(fs, a, b, noise);
    benchmark::DoNotOptimize(fs.covariance(0, 0));
  }
}
BENCHMARK(BM_PropagateFilter);

}  // namespace
BENCHMARK_MAIN();
