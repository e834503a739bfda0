#include "moeprune/train.hpp"

#include <cmath>
#include <cstdio>
#include <random>
#include <stdexcept>

namespace moeprune {

void AdamOptimizer::step(std::vector<std::pair<std::string, ag::Var>>& params) {
    if (m_.empty()) {
        m_.resize(params.size());
        v_.resize(params.size());
        for (size_t i = 0; i < params.size(); ++i) {
            const auto& val = params[i].second->value;
            m_[i] = ag::Mat::Zero(val.rows(), val.cols());
            v_[i] = ag::Mat::Zero(val.rows(), val.cols());
        }
    }
    if (m_.size() != params.size())
        throw std::invalid_argument("AdamOptimizer: parameter set changed");
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (size_t i = 0; i < params.size(); ++i) {
        ag::Node& p = *params[i].second;
        if (p.grad.size() == 0) continue;
        m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * p.grad;
        v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * p.grad.cwiseProduct(p.grad);
        ag::Mat mhat = m_[i] / bc1;
        ag::Mat vhat = v_[i] / bc2;
        p.value -= lr_ * mhat.cwiseQuotient(
                             (vhat.cwiseSqrt().array() + eps_).matrix());
    }
}

void AdamOptimizer::zero_grad(std::vector<std::pair<std::string, ag::Var>>& params) {
    for (auto& [name, p] : params) p->grad.resize(0, 0);
}

LossBreakdown training_step(MoEModel& model, AdamOptimizer& opt,
                            const std::vector<TrainSample>& batch) {
    if (batch.empty()) throw std::invalid_argument("training_step: empty batch");
    opt.zero_grad(model.named_parameters());
    auto [task, lb] = model.loss(batch);
    ag::Var total = ag::add(task, ag::scale(lb, model.config().lb_loss_coeff));
    ag::backward(total);
    opt.step(model.named_parameters());
    return {task->value(0, 0), lb->value(0, 0), total->value(0, 0)};
}

void train_model(MoEModel& model, const Vocab& vocab,
                 const std::vector<CorpusSample>& corpus, const TrainOptions& opts) {
    if (corpus.empty()) throw std::invalid_argument("train_model: empty corpus");
    std::vector<TrainSample> samples;
    samples.reserve(corpus.size());
    for (const auto& s : corpus) samples.push_back(make_train_sample(vocab, s));

    AdamOptimizer opt(opts.lr);
    std::mt19937_64 rng(opts.seed);
    std::uniform_int_distribution<size_t> pick(0, samples.size() - 1);
    for (int step = 1; step <= opts.steps; ++step) {
        std::vector<TrainSample> batch;
        batch.reserve(opts.batch_size);
        for (int i = 0; i < opts.batch_size; ++i) batch.push_back(samples[pick(rng)]);
        LossBreakdown loss = training_step(model, opt, batch);
        if (opts.log_every > 0 && step % opts.log_every == 0)
            std::fprintf(stderr, "step %d/%d  task %.4f  lb %.4f\n", step, opts.steps,
                         loss.task, loss.lb);
    }
}

double token_accuracy(const MoEModel& model, const Vocab& vocab,
                      const std::vector<CorpusSample>& corpus) {
    if (corpus.empty()) throw std::invalid_argument("token_accuracy: empty corpus");
    ag::NoGradGuard no_grad;
    long correct = 0, total = 0;
    for (const auto& s : corpus) {
        TrainSample ts = make_train_sample(vocab, s);
        ag::Var memory = model.encode(ts.enc_input);
        ag::Var logits = model.decoder_logits(memory, ts.dec_input);
        for (size_t t = 0; t < ts.labels.size(); ++t) {
            Eigen::Index argmax;
            logits->value.row(static_cast<Eigen::Index>(t)).maxCoeff(&argmax);
            correct += (static_cast<int>(argmax) == ts.labels[t]);
            ++total;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace moeprune
