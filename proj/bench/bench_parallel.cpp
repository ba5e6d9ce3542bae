// Serial reference against the OpenMP kernels on the three parallel
// workloads: Monte Carlo replicates, bootstrap replicates and the lambda*
// sweep. Also checks that both paths give identical results.
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "otreweight/parallel.hpp"
#include "otreweight/portfolio.hpp"
#include "otreweight/survey.hpp"

using namespace otrw;

namespace {

template <class F>
double seconds(F&& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  fn();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void report(const char* name, double serial, double parallel, int jobs, bool same) {
  std::printf("%-22s serial %8.3f s  parallel(%d) %8.3f s  speedup %5.2f  %s\n", name, serial, jobs,
              parallel, serial / parallel, same ? "identical" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
  const int jobs = argc > 1 ? std::atoi(argv[1]) : available_threads();
  std::printf("threads available %d, using %d\n", available_threads(), jobs);
  bool all_same = true;

  // Monte Carlo replicates: draw a sample and fit PMLE, 200 times.
  {
    SimulationConfig cfg;
    const Population pop = simulate_population(cfg, 11);
    auto fit = [&](std::size_t r) { return pmle_normal(draw_sample(cfg, pop, 11, r)).theta; };
    std::vector<Eigen::VectorXd> a, b;
    const double ts = seconds([&] { a = map_serial<Eigen::VectorXd>(200, fit); });
    const double tp = seconds([&] { b = map_parallel<Eigen::VectorXd>(200, jobs, fit); });
    bool same = true;
    for (std::size_t i = 0; i < a.size(); ++i) same = same && a[i] == b[i];
    report("mc replicates", ts, tp, jobs, same);
    all_same = all_same && same;
  }

  // Bootstrap replicates: one BDCM fit with M = 8.
  {
    SimulationConfig cfg;
    const Population pop = simulate_population(cfg, 12);
    const SurveySample sample = draw_sample(cfg, pop, 12, 0);
    BdcmConfig bc;
    bc.replicates = 8;
    BdcmFit a, b;
    const double ts = seconds([&] { a = bdcm_fit(sample, mean_deviation(), bc, 5, 1); });
    const double tp = seconds([&] { b = bdcm_fit(sample, mean_deviation(), bc, 5, jobs); });
    const bool same = a.theta == b.theta && a.covariance == b.covariance;
    report("bootstrap replicates", ts, tp, jobs, same);
    all_same = all_same && same;
  }

  // lambda* sweep with multistarts on the synthetic five-asset data.
  {
    const ReturnMatrix returns = synth_returns({}, 2);
    const MvTarget target = target_from_mv(returns, 1.0);
    const std::vector<double> grid{0.0, 0.01, 0.05, 0.1, 0.3, 0.5, 0.7, 1.0};
    PortfolioConfig pc;
    SweepResult a, b;
    const double ts = seconds([&] { a = sweep_lambda(returns, target.family, grid, pc, 3, 1); });
    const double tp = seconds([&] { b = sweep_lambda(returns, target.family, grid, pc, 3, jobs); });
    bool same = a.rows.size() == b.rows.size();
    for (std::size_t i = 0; same && i < a.rows.size(); ++i) same = a.rows[i].weights == b.rows[i].weights;
    report("lambda* sweep", ts, tp, jobs, same);
    all_same = all_same && same;
  }
  return all_same ? 0 : 1;
}
