// Steers a uniform particle cloud towards the origin with receding-horizon control.

#include <cstdio>

#include "mfmpc/costs.hpp"
#include "mfmpc/mpc.hpp"

int main() {
  mfmpc::ModelConfig model;
  model.kernel_gain = 0.05;
  model.nu = 100.0;

  const auto cloud = mfmpc::sample_uniform(10000, {-0.5, 1.0}, 7);
  const auto mpc = mfmpc::MpcConfig::make(5, model);

  mfmpc::SimulateOptions<mfmpc::EmpiricalMeasure> opts;
  opts.record_states = false;
  const auto traj = mfmpc::closed_loop(cloud, mpc, 50, mfmpc::HorizonWindow::Fixed, opts);

  for (std::size_t n = 0; n <= traj.steps(); n += 10)
    std::printf("n = %2zu  mean = % .6f  variance = %.6f\n", n, traj.moments[n].mean, traj.moments[n].variance);
  std::printf("total cost %.8f\n", traj.total_cost);
}
