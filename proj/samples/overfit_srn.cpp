// Overfits SRN-tiny to one 16x16x4 sample and prints the loss curve.

#include <iostream>

#include "snapsci/snapsci.hpp"

int main(int argc, char** argv) {
  using namespace snapsci;
  const std::size_t steps = argc > 1 ? std::stoul(argv[1]) : 2000;
  SceneSpec spec;
  spec.height = spec.width = 16;
  spec.seed = 1;
  Dataset<float> data;
  data.cubes.push_back(generate_scene<float>(spec));
  data.masks = make_cassi_masks(generate_mask<float>(16, 16, {}, 11), 4, 1);

  SrnModel<float> model(SrnConfig::tiny(4), 1);
  TrainOptions opts;
  opts.batch_size = 1;
  opts.adam.halve_every = 0;  // one sample per epoch; keep lr fixed
  Trainer<float> trainer(model.parameters(), srn_mse_loss(model, data.masks), data, opts);
  for (std::size_t i = 0; i < steps; ++i) {
    const double loss = trainer.step();
    if (i % 200 == 0 || i + 1 == steps) std::cout << "step " << i << "  mse " << loss << "\n";
  }
}
