#include <benchmark/benchmark.h>

#include "vplidar/iou.hpp"
#include "vplidar/patch.hpp"
#include "vplidar/perturb.hpp"
#include "vplidar/sall.hpp"
#include "vplidar/surrogate.hpp"
#include "vplidar/synth.hpp"

using namespace vplidar;

namespace {

Scene car_scene(int points) {
    CarSceneOptions opt;
    opt.points_per_car = points;
    return synth_car_scenes(1, opt, 17, "bench").front();
}

void BM_SurrogateScore(benchmark::State& state) {
    const Scene s = car_scene(static_cast<int>(state.range(0)));
    const auto pts = gather(s.cloud, extract(s).targets[0]);
    const SurrogateParams params;
    for (auto _ : state) benchmark::DoNotOptimize(surrogate_score(pts, s.boxes[0], params));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(pts.size()));
}
BENCHMARK(BM_SurrogateScore)->Arg(100)->Arg(300)->Arg(1000);

void BM_IntegratedGradients(benchmark::State& state) {
    const Scene s = car_scene(300);
    SurrogateDetector det;
    IGConfig c;
    c.steps = static_cast<int>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(ig_attribute(s, 0, det, c));
}
BENCHMARK(BM_IntegratedGradients)->Arg(5)->Arg(25)->Unit(benchmark::kMillisecond);

void BM_ApplyAttack(benchmark::State& state) {
    const Scene s = car_scene(300);
    AttackConfig c;
    c.patch = PatchKind::CriticalX;
    c.budget = static_cast<int>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(apply(s, 0, c));
}
BENCHMARK(BM_ApplyAttack)->Arg(10)->Arg(200);

void BM_BevIou(benchmark::State& state) {
    BoundingBox a;
    a.cx = 8.0;
    a.length = 4.0;
    a.width = 1.8;
    a.height = 1.5;
    BoundingBox b = a;
    b.cx += 0.7;
    b.cy += 0.3;
    b.yaw = 0.4;
    for (auto _ : state) benchmark::DoNotOptimize(bev_iou(a, b));
}
BENCHMARK(BM_BevIou);

void BM_CriticalXMask(benchmark::State& state) {
    for (auto _ : state) benchmark::DoNotOptimize(cvp_critical_x(64, 32, 0.1, 0.2));
}
BENCHMARK(BM_CriticalXMask);

}  // namespace

BENCHMARK_MAIN();
