// Logs 500 rounds on a quadratic synthetic bandit and compares a pessimistic
// neural policy with its greedy counterpart and LinLCB.

#include <cstdio>

#include "banditlab/banditlab.hpp"

int main() {
    using namespace banditlab;

    const auto bandit = BanditInstance::synthetic(SyntheticSpec::make(SyntheticFamily::H1, 10, 1), 5);
    const auto data = collect_eps_greedy(bandit, 500, 0.1, 2);
    const auto test = sample_test_rounds(bandit, 1000, 3);

    auto cfg = NeuralLearnerConfig::practical(NetworkConfig{2, 20, 10, true}, 0.05, 1e-3);
    cfg.mode = TrainMode::B;
    cfg.epochs = 20;
    cfg.seed = 4;

    const Policy neural = neuralcb_run(data, cfg);
    const Policy greedy = neural_greedy_run(data, cfg);
    const Policy linear = linlcb_fit(data, 0.1, 0.05);

    std::printf("neuralcb      %.4f\n", evaluate_suboptimality(neural, test));
    std::printf("neuralgreedy  %.4f\n", evaluate_suboptimality(greedy, test));
    std::printf("linlcb        %.4f\n", evaluate_suboptimality(linear, test));
}
