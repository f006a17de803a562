// Generation masses after tau_start for X = floor(n^delta), compared with the
// Poisson weights p_{j-1}(beta). Usage: demo_piles [n] [delta]

#include <cstdlib>
#include <iomanip>
#include <iostream>

#include "rba/rba.hpp"

int main(int argc, char** argv) {
  const int n = argc > 1 ? std::atoi(argv[1]) : 20000;
  const double delta = argc > 2 ? std::atof(argv[2]) : 0.4;
  const int k = rba::power_block_size(n, delta);
  const auto spec = rba::make_deterministic(n, k);

  // Start from the state at tau_start: k sites of mass 1/k, one pile each.
  auto ledger = rba::PileLedger::eta_start(n, k);
  rba::BlockStream blocks(spec, 11, 0);
  const double unit = static_cast<double>(n) / k;
  std::cout << "n = " << n << ", k = " << k << "\n";
  std::uint64_t t = 0;
  for (double beta : {0.5, 1.0, 2.0, 4.0}) {
    const auto target = static_cast<std::uint64_t>(beta * unit);
    for (; t < target; ++t) ledger.step(blocks.next());
    const auto hist = rba::generation_histogram(ledger, spec);
    std::cout << "\nbeta = " << beta << " (t = " << t << ")\n   j    mass    Poisson\n";
    for (int j = 1; j <= 6; ++j)
      std::cout << std::setw(4) << j << std::fixed << std::setprecision(4) << std::setw(9) << hist.at(j)
                << std::setw(9) << rba::poisson_pmf(beta, j - 1) << std::defaultfloat << '\n';
  }
}
