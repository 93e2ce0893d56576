#include <benchmark/benchmark.h>

#include <cmath>
#include <vector>

#include "encompass/engine.hpp"
#include "encompass/fixtures.hpp"
#include "encompass/link.hpp"
#include "encompass/model_io.hpp"
#include "encompass/random.hpp"

using namespace encompass;

namespace {

const char* kTp2 = R"({"name": "tp2", "logit_types": "local", "constraints": [{"type": "tp2"}]})";

void BM_EtaFromPi(benchmark::State& state) {
  const int m = static_cast<int>(state.range(0));
  const auto link = build_link(std::vector<int>{m, m}, LogitType::global);
  const Eigen::VectorXd pi = Eigen::VectorXd::Constant(m * m, 1.0 / (m * m));
  for (auto _ : state) benchmark::DoNotOptimize(eta_from_pi(pi, link));
}
BENCHMARK(BM_EtaFromPi)->Arg(3)->Arg(6)->Arg(9);

void BM_PiFromEta(benchmark::State& state) {
  const auto link = build_link(std::vector<int>{6, 6}, LogitType::local);
  RandomEngine rng(derive_seed(1, {}));
  std::vector<double> alpha(36, 1.0), lp(36);
  log_dirichlet_draw(alpha, lp, rng);
  Eigen::VectorXd pi(36);
  for (int k = 0; k < 36; ++k) pi(k) = std::exp(lp[k]);
  const auto eta = eta_from_pi(pi / pi.sum(), link);
  for (auto _ : state) benchmark::DoNotOptimize(pi_from_eta(eta, link));
}
BENCHMARK(BM_PiFromEta);

void BM_DirichletDraw(benchmark::State& state) {
  const auto r = static_cast<std::size_t>(state.range(0));
  std::vector<double> alpha(r, 1.0), lp(r);
  RandomEngine rng(derive_seed(2, {}));
  for (auto _ : state) {
    log_dirichlet_draw(alpha, lp, rng);
    benchmark::DoNotOptimize(lp.data());
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_DirichletDraw)->Arg(9)->Arg(36)->Arg(81);

void BM_ScanFatherSon(benchmark::State& state) {
  const auto t = fixtures::father_son();
  const auto m = parse_model(kTp2, t.dims(), 1);
  const auto prior = PriorSpec::uniform(36, 1);
  const std::size_t n = 20000;
  ScanOptions opts;
  opts.threads = static_cast<unsigned>(state.range(0));
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(scan_draws(m, prior.concentration, nullptr, n, ++seed, opts));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_ScanFatherSon)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_ImportanceScan(benchmark::State& state) {
  const auto t = fixtures::father_son();
  const auto m = parse_model(kTp2, t.dims(), 1);
  const auto target = prior_target(PriorSpec::uniform(36, 1));
  const auto g = ImportanceDensity::centred(prior_center(m), 20.0, "prior_center");
  const std::size_t n = 20000;
  ScanOptions opts;
  opts.threads = 1;
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(scan_draws(m, g.params, &target.params, n, ++seed, opts));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_ImportanceScan)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
