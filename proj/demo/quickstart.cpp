// Trains gated steering on a two-attribute fixture whose shift directions
// point in opposite ways, then compares it with adding the summed vectors.

#include <iostream>
#include <numbers>

#include "matsteer/harness.hpp"

int main() {
  using namespace matsteer;
  SynthSpec spec;
  spec.n_attributes = 2;
  spec.conflict_angle = std::numbers::pi;
  const SplitData data = gen_synthetic(spec);

  const TrainConfig cfg = desk_train_config();
  const TrainTrace trace = train(data.train, cfg, &data.dev);
  std::cout << "trained " << trace.epochs_run << " epochs, final loss " << trace.steps.back().total << "\n\n";

  const auto report = gating_report(data.test, compute_centroids(data.train), trace.final_params);
  std::cout << report_text(report) << '\n';

  const auto rows = compare_methods(data, {Method::kMatSteer, Method::kSummed}, cfg);
  std::cout << aligned_table(compare_rows(rows, false));
  return 0;
}
