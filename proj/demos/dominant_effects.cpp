// Trains MC-GMENN and the Ignore baseline on one simulated scenario and
// prints test AUC and the estimated variance components.
//
//   demo_dominant_effects [scenario] [seed]

#include <iostream>
#include <string>

#include "mcgmenn/mcgmenn.hpp"

int main(int argc, char** argv) {
  using namespace mcgmenn;
  const std::string name = argc > 1 ? argv[1] : "binary_q100_s1_desk";
  const std::uint64_t seed = argc > 2 ? std::stoull(argv[2]) : 0;
  try {
    const GeneratedDataset g = generate(with_seed(find_scenario(name), seed));
    const Dataset train = g.train(), val = g.val(), test = g.test();
    std::cout << name << ": " << train.rows() << " training rows, " << train.design.num_features()
              << " clustering feature(s)\n";

    RunConfig run;
    run.mcem.trainer.seed = seed;
    for (Method m : {Method::ignore, Method::mcgmenn}) {
      run.method = m;
      const TrainedModel model = train_model(train, val, run);
      std::cout << "  " << to_string(m) << ": test AUC " << auc(model, test) << " (" << model.seconds << " s, best epoch "
                << model.best_epoch << ")\n";
      if (auto s2 = model.sigma2()) {
        std::cout << "  estimated sigma^2:\n" << *s2 << "\n  true sigma^2:\n" << g.true_sigma2 << '\n';
      }
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.code());
  }
  return 0;
}
