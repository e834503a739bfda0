#pragma once

#include <cstdint>
#include <vector>

#include "moeprune/data.hpp"
#include "moeprune/model.hpp"

namespace moeprune {

struct LossBreakdown {
    double task = 0.0;
    double lb = 0.0;
    double total = 0.0;
};

class AdamOptimizer {
  public:
    explicit AdamOptimizer(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
                           double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(std::vector<std::pair<std::string, ag::Var>>& params);
    void zero_grad(std::vector<std::pair<std::string, ag::Var>>& params);

  private:
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<ag::Mat> m_, v_;
};

// One optimizer step on a batch; returns the loss components.
LossBreakdown training_step(MoEModel& model, AdamOptimizer& opt,
                            const std::vector<TrainSample>& batch);

struct TrainOptions {
    int steps = 2000;
    int batch_size = 16;
    double lr = 1e-3;
    std::uint64_t seed = 1;
    int log_every = 100;  // 0 silences progress
};

// Shuffled-minibatch training over a corpus.
void train_model(MoEModel& model, const Vocab& vocab,
                 const std::vector<CorpusSample>& corpus, const TrainOptions& opts);

// Teacher-forced next-token accuracy.
double token_accuracy(const MoEModel& model, const Vocab& vocab,
                      const std::vector<CorpusSample>& corpus);

}  // namespace moeprune
