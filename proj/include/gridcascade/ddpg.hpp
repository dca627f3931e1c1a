#pragma once
// Deep deterministic policy gradient: actor/critic multilayer perceptrons
// with hand-rolled reverse-mode gradients, uniform replay, soft-updated
// target networks and Gaussian exploration noise.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gridcascade/cascade_env.hpp"
#include "gridcascade/dense.hpp"
#include "gridcascade/rng.hpp"

namespace gridcascade {

enum class OutputSquash {
    Linear,       // critic head
    UnitInterval  // actor head: 0.5 * (1 + tanh(z))
};

struct MlpParams {
    struct Layer {
        dense::Matrix w;  // out x in
        std::vector<double> b;
    };
    std::vector<Layer> layers;
    OutputSquash squash = OutputSquash::Linear;

    size_t parameter_count() const;
};

// Rectifier hidden layers. Weights are He-uniform, the output layer starts
// near zero so the initial actor policy sits at 0.5 per coordinate.
MlpParams make_mlp(const std::vector<int>& sizes, OutputSquash squash, Rng& rng);

// inputs: batch x in. Returns batch x out.
dense::Matrix mlp_forward(const MlpParams& mlp, const dense::Matrix& inputs);

struct MlpGradients {
    std::vector<MlpParams::Layer> layers;  // same shapes as the network
    dense::Matrix input_grad;              // batch x in
};

// Backpropagates dLoss/dOutput (batch x out); fills parameter gradients and
// the gradient with respect to the inputs.
MlpGradients mlp_backward(const MlpParams& mlp, const dense::Matrix& inputs,
                          const dense::Matrix& output_grad);

// target <- tau * online + (1 - tau) * target, elementwise.
void soft_update(const MlpParams& online, MlpParams& target, double tau);

class AdamOptimizer {
public:
    AdamOptimizer() = default;
    AdamOptimizer(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

    void step(MlpParams& params, const MlpGradients& grads);

    double learning_rate = 1e-4;
    double beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;
    long t = 0;
    std::vector<MlpParams::Layer> m, v;  // first/second moments, lazily shaped
};

struct Transition {
    std::vector<double> s;
    std::vector<double> a;
    double r = 0.0;
    std::vector<double> s_next;
    bool done = false;
};

class ReplayBuffer {
public:
    explicit ReplayBuffer(size_t capacity) : capacity_(capacity) {}

    void push(Transition t);
    size_t size() const { return storage_.size(); }
    size_t capacity() const { return capacity_; }
    const Transition& operator[](size_t i) const { return storage_[i]; }

    // batch_size distinct indices, uniform without replacement.
    std::vector<size_t> sample_indices(size_t batch_size, Rng& rng) const;

private:
    size_t capacity_;
    size_t cursor_ = 0;
    std::vector<Transition> storage_;
};

// Running elementwise mean/variance (Welford) used to standardize
// observations before the networks.
struct RunningNorm {
    long long count = 0;
    std::vector<double> mean;
    std::vector<double> m2;

    void update(std::span<const double> x);
    std::vector<double> normalize(std::span<const double> x) const;
};

struct AgentConfig {
    double learning_rate = 1e-4;
    int batch_size = 128;
    double gamma = 0.99;
    double tau = 0.001;
    size_t replay_capacity = 100000;
    int warmup_steps = 128;  // transitions required before training starts
    int hidden1 = 128;
    int hidden2 = 128;
    double noise_sigma_start = 0.2;
    double noise_sigma_end = 0.02;
    // rewards are O(1000); scaled targets keep the critic in a range the
    // shared learning rate can reach
    double reward_scale = 1e-3;
    bool normalize_observations = true;
};

struct TrainDiagnostics {
    double critic_loss = 0.0;
    double actor_objective = 0.0;
};

class DdpgAgent {
public:
    DdpgAgent(size_t obs_dim, size_t act_dim, AgentConfig cfg, std::uint64_t init_seed,
              std::uint64_t exploration_seed);

    // Deterministic policy; Gaussian noise scaled by noise_scale is added and
    // the result clamped to [0,1]. noise_scale == 0 draws nothing.
    Action act(const Observation& obs, double noise_scale);
    Action act(const Observation& obs) const;  // noise-free, does not touch RNG

    Action random_action();  // warmup: uniform in [0,1]^m

    void observe_for_norm(const Observation& obs);
    void add_transition(const Observation& s, const Action& a, double r,
                        const Observation& s_next, bool done);
    bool ready_to_train() const;

    // One critic step, one actor step, then soft-updates both targets.
    // Throws std::runtime_error on a non-finite loss.
    TrainDiagnostics train_step();

    void save_checkpoint(const std::string& path) const;
    static DdpgAgent load_checkpoint(const std::string& path);

    size_t obs_dim() const { return obs_dim_; }
    size_t act_dim() const { return act_dim_; }
    const AgentConfig& config() const { return cfg_; }
    const ReplayBuffer& buffer() const { return buffer_; }
    const MlpParams& actor() const { return actor_; }
    const MlpParams& critic() const { return critic_; }
    const MlpParams& actor_target() const { return actor_target_; }
    const MlpParams& critic_target() const { return critic_target_; }
    MlpParams& mutable_actor() { return actor_; }
    MlpParams& mutable_critic() { return critic_; }
    const RunningNorm& norm() const { return norm_; }
    long train_steps() const { return train_steps_; }

private:
    DdpgAgent(size_t obs_dim, size_t act_dim, AgentConfig cfg);  // checkpoint path

    std::vector<double> normalized(std::span<const double> obs) const;

    size_t obs_dim_, act_dim_;
    AgentConfig cfg_;
    MlpParams actor_, critic_, actor_target_, critic_target_;
    AdamOptimizer actor_opt_, critic_opt_;
    ReplayBuffer buffer_;
    RunningNorm norm_;
    Rng explore_rng_;
    long train_steps_ = 0;
};

}  // namespace gridcascade
