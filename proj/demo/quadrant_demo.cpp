// Targeted attack against the quadrant oracle: the source is bright top-left (label 0), the
// target bright bottom-right (label 3). Writes both inputs and the adversarial to a directory
// so `devopatch experiment --config demo/quadrant.json` can rerun the same pair.
#include <iostream>
#include <random>

#include "devopatch/image_io.hpp"
#include "devopatch/devopatch.hpp"

namespace dp = devopatch;

static dp::Image quadrant_image(int size, int bright_quadrant, std::mt19937& rng) {
  std::uniform_int_distribution<int> hi(153, 255), lo(0, 102);
  dp::Image img(dp::Shape{3, size, size});
  for (int i = 0; i < size; ++i)
    for (int j = 0; j < size; ++j) {
      const int q = (i >= size / 2 ? 2 : 0) + (j >= size / 2 ? 1 : 0);
      for (int c = 0; c < 3; ++c) img.set(c, i, j, static_cast<float>(q == bright_quadrant ? hi(rng) : lo(rng)) / 255.0f);
    }
  return img;
}

int main(int argc, char** argv) {
  const std::filesystem::path dir = argc > 1 ? argv[1] : "demo_out";
  std::mt19937 rng(7);
  const auto source = quadrant_image(32, 0, rng);
  const auto target = quadrant_image(32, 3, rng);
  dp::save_image(dir / "source.png", source);
  dp::save_image(dir / "target.png", target);

  dp::SyntheticOracle oracle(dp::QuadrantMax{});
  dp::EngineConfig cfg;
  cfg.query_budget = 2000;
  cfg.seed = 1;
  const auto result = dp::run_attack(oracle, source, 0, target, dp::SuccessPredicate::targeted(3), cfg);
  dp::save_image(dir / "adversarial.png", result.adversarial);

  std::cout << "candidate " << result.candidate << "\n"
            << "perturbed pixels " << result.perturbed_pixels << " ("
            << dp::area_percent(result.perturbed_pixels, 32, 32) << "%)\n"
            << "queries " << result.trace.total_queries << " (best reached at " << result.trace.queries_to_best
            << ")\n"
            << "adversarial label " << oracle.classify(dp::load_image(dir / "adversarial.png")) << "\n";
}
