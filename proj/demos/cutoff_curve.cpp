// Mean distance to equilibrium around t_ent for X = 2, next to the Gaussian
// limit profile. Usage: demo_cutoff [n] [replicas]

#include <cstdlib>
#include <iomanip>
#include <iostream>

#include "rba/rba.hpp"

int main(int argc, char** argv) {
  const int n = argc > 1 ? std::atoi(argv[1]) : 5000;
  const auto replicas = static_cast<std::uint64_t>(argc > 2 ? std::atoi(argv[2]) : 20);

  rba::json doc = {
      {"spec", {{"n", n}, {"kind", "deterministic"}, {"parameters", {{"k", 2}}}}},
      {"schedule", {{"mode", "beta"}, {"betas", {-2.0, -1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0}}}},
      {"replicas", replicas},
      {"seed", 7},
      {"reference", {{"kind", "gaussian_cutoff"}}},
  };
  const auto cfg = rba::config_from_json(doc);
  const auto ts = rba::timescales(cfg.spec);
  std::cout << "n = " << n << ", t_ent = " << ts.t_ent << ", t_w = " << ts.t_w << "\n\n";
  std::cout << " beta        t   mean d_TV   stderr   Phi(-beta)\n";
  const auto agg = rba::run_experiment(cfg);
  for (const auto& p : agg.points)
    std::cout << std::setw(5) << p.x << std::setw(9) << p.t << std::fixed << std::setprecision(4)
              << std::setw(12) << p.d_tv.mean << std::setw(9) << p.d_tv.std_error << std::setw(13)
              << *p.reference << std::defaultfloat << '\n';
}
