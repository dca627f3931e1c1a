#include "gridcascade/ddpg.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace gridcascade {

size_t MlpParams::parameter_count() const {
    size_t n = 0;
    for (const Layer& l : layers) n += l.w.data.size() + l.b.size();
    return n;
}

MlpParams make_mlp(const std::vector<int>& sizes, OutputSquash squash, Rng& rng) {
    if (sizes.size() < 2) throw std::invalid_argument("make_mlp: need at least two sizes");
    MlpParams mlp;
    mlp.squash = squash;
    for (size_t l = 0; l + 1 < sizes.size(); ++l) {
        MlpParams::Layer layer;
        layer.w = dense::Matrix(sizes[l + 1], sizes[l]);
        layer.b.assign(sizes[l + 1], 0.0);
        const bool last = l + 2 == sizes.size();
        const double bound = last ? 3e-3 : std::sqrt(6.0 / sizes[l]);
        for (double& w : layer.w.data) w = rng.uniform(-bound, bound);
        if (last) {
            for (double& b : layer.b) b = rng.uniform(-bound, bound);
        }
        mlp.layers.push_back(std::move(layer));
    }
    return mlp;
}

namespace {

// Forward pass keeping the pre-activations needed by the backward pass.
struct ForwardTrace {
    std::vector<dense::Matrix> activations;  // [inputs, h1, ..., output]
};

dense::Matrix layer_forward(const MlpParams::Layer& layer, const dense::Matrix& input) {
    dense::Matrix z;
    dense::matmul(input, dense::Trans::None, layer.w, dense::Trans::Yes, z);
    for (int i = 0; i < z.rows; ++i) {
        double* row = z[i];
        for (int j = 0; j < z.cols; ++j) row[j] += layer.b[j];
    }
    return z;
}

void apply_activation(dense::Matrix& z, bool last, OutputSquash squash) {
    if (!last) {
        for (double& v : z.data) v = v > 0.0 ? v : 0.0;
    } else if (squash == OutputSquash::UnitInterval) {
        for (double& v : z.data) v = 0.5 * (1.0 + std::tanh(v));
    }
}

ForwardTrace forward_trace(const MlpParams& mlp, const dense::Matrix& inputs) {
    ForwardTrace t;
    t.activations.reserve(mlp.layers.size() + 1);
    t.activations.push_back(inputs);
    for (size_t l = 0; l < mlp.layers.size(); ++l) {
        dense::Matrix z = layer_forward(mlp.layers[l], t.activations.back());
        apply_activation(z, l + 1 == mlp.layers.size(), mlp.squash);
        t.activations.push_back(std::move(z));
    }
    return t;
}

MlpGradients backward_from_trace(const MlpParams& mlp, const ForwardTrace& trace,
                                 const dense::Matrix& output_grad) {
    MlpGradients g;
    g.layers.resize(mlp.layers.size());
    dense::Matrix delta = output_grad;  // dLoss/d(activation)
    for (int l = static_cast<int>(mlp.layers.size()) - 1; l >= 0; --l) {
        const bool last = l + 1 == static_cast<int>(mlp.layers.size());
        const dense::Matrix& act = trace.activations[l + 1];
        if (last && mlp.squash == OutputSquash::UnitInterval) {
            // y = 0.5 (1 + tanh z)  =>  dy/dz = 2 y (1 - y)
            for (size_t i = 0; i < delta.data.size(); ++i) {
                const double y = act.data[i];
                delta.data[i] *= 2.0 * y * (1.0 - y);
            }
        } else if (!last) {
            for (size_t i = 0; i < delta.data.size(); ++i) {
                if (act.data[i] <= 0.0) delta.data[i] = 0.0;
            }
        }
        MlpParams::Layer& lg = g.layers[l];
        dense::matmul(delta, dense::Trans::Yes, trace.activations[l], dense::Trans::None, lg.w);
        lg.b.assign(mlp.layers[l].b.size(), 0.0);
        for (int i = 0; i < delta.rows; ++i) {
            const double* row = delta[i];
            for (int j = 0; j < delta.cols; ++j) lg.b[j] += row[j];
        }
        dense::Matrix prev_delta;
        dense::matmul(delta, dense::Trans::None, mlp.layers[l].w, dense::Trans::None, prev_delta);
        delta = std::move(prev_delta);
    }
    g.input_grad = std::move(delta);
    return g;
}

}  // namespace

dense::Matrix mlp_forward(const MlpParams& mlp, const dense::Matrix& inputs) {
    dense::Matrix x = inputs;
    for (size_t l = 0; l < mlp.layers.size(); ++l) {
        x = layer_forward(mlp.layers[l], x);
        apply_activation(x, l + 1 == mlp.layers.size(), mlp.squash);
    }
    return x;
}

MlpGradients mlp_backward(const MlpParams& mlp, const dense::Matrix& inputs,
                          const dense::Matrix& output_grad) {
    return backward_from_trace(mlp, forward_trace(mlp, inputs), output_grad);
}

void soft_update(const MlpParams& online, MlpParams& target, double tau) {
    if (online.layers.size() != target.layers.size()) {
        throw std::invalid_argument("soft_update: layer count mismatch");
    }
    for (size_t l = 0; l < online.layers.size(); ++l) {
        const auto& src = online.layers[l];
        auto& dst = target.layers[l];
        if (src.w.data.size() != dst.w.data.size() || src.b.size() != dst.b.size()) {
            throw std::invalid_argument("soft_update: shape mismatch");
        }
        for (size_t i = 0; i < src.w.data.size(); ++i) {
            dst.w.data[i] = tau * src.w.data[i] + (1.0 - tau) * dst.w.data[i];
        }
        for (size_t i = 0; i < src.b.size(); ++i) {
            dst.b[i] = tau * src.b[i] + (1.0 - tau) * dst.b[i];
        }
    }
}

AdamOptimizer::AdamOptimizer(double lr, double b1, double b2, double eps)
    : learning_rate(lr), beta1(b1), beta2(b2), epsilon(eps) {}

void AdamOptimizer::step(MlpParams& params, const MlpGradients& grads) {
    if (m.empty()) {
        m.resize(params.layers.size());
        v.resize(params.layers.size());
        for (size_t l = 0; l < params.layers.size(); ++l) {
            m[l].w = dense::Matrix(params.layers[l].w.rows, params.layers[l].w.cols);
            m[l].b.assign(params.layers[l].b.size(), 0.0);
            v[l].w = dense::Matrix(params.layers[l].w.rows, params.layers[l].w.cols);
            v[l].b.assign(params.layers[l].b.size(), 0.0);
        }
    }
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    const double alpha = learning_rate * std::sqrt(bc2) / bc1;
    for (size_t l = 0; l < params.layers.size(); ++l) {
        auto update = [&](double& p, double& mi, double& vi, double g) {
            mi = beta1 * mi + (1.0 - beta1) * g;
            vi = beta2 * vi + (1.0 - beta2) * g * g;
            p -= alpha * mi / (std::sqrt(vi) + epsilon);
        };
        auto& lw = params.layers[l].w.data;
        const auto& gw = grads.layers[l].w.data;
        for (size_t i = 0; i < lw.size(); ++i) update(lw[i], m[l].w.data[i], v[l].w.data[i], gw[i]);
        auto& lb = params.layers[l].b;
        const auto& gb = grads.layers[l].b;
        for (size_t i = 0; i < lb.size(); ++i) update(lb[i], m[l].b[i], v[l].b[i], gb[i]);
    }
}

void ReplayBuffer::push(Transition t) {
    if (storage_.size() < capacity_) {
        storage_.push_back(std::move(t));
    } else {
        storage_[cursor_] = std::move(t);
    }
    cursor_ = (cursor_ + 1) % capacity_;
}

std::vector<size_t> ReplayBuffer::sample_indices(size_t batch_size, Rng& rng) const {
    if (batch_size > storage_.size()) {
        throw std::logic_error("ReplayBuffer: batch larger than buffer");
    }
    // partial Fisher-Yates over the index range
    std::vector<size_t> idx(storage_.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::vector<size_t> out(batch_size);
    for (size_t i = 0; i < batch_size; ++i) {
        const size_t j = i + rng.next_below(idx.size() - i);
        std::swap(idx[i], idx[j]);
        out[i] = idx[i];
    }
    return out;
}

void RunningNorm::update(std::span<const double> x) {
    if (mean.empty()) {
        mean.assign(x.size(), 0.0);
        m2.assign(x.size(), 0.0);
    }
    ++count;
    for (size_t i = 0; i < x.size(); ++i) {
        const double delta = x[i] - mean[i];
        mean[i] += delta / static_cast<double>(count);
        m2[i] += delta * (x[i] - mean[i]);
    }
}

std::vector<double> RunningNorm::normalize(std::span<const double> x) const {
    std::vector<double> out(x.begin(), x.end());
    if (count < 2) return out;
    for (size_t i = 0; i < out.size(); ++i) {
        const double var = m2[i] / static_cast<double>(count - 1);
        out[i] = (out[i] - mean[i]) / std::sqrt(var + 1e-8);
    }
    return out;
}

DdpgAgent::DdpgAgent(size_t obs_dim, size_t act_dim, AgentConfig cfg, std::uint64_t init_seed,
                     std::uint64_t exploration_seed)
    : obs_dim_(obs_dim),
      act_dim_(act_dim),
      cfg_(cfg),
      actor_opt_(cfg.learning_rate),
      critic_opt_(cfg.learning_rate),
      buffer_(cfg.replay_capacity),
      explore_rng_(exploration_seed) {
    if (!(cfg.tau > 0.0 && cfg.tau <= 1.0) || !(cfg.gamma >= 0.0 && cfg.gamma < 1.0)) {
        throw std::invalid_argument("DdpgAgent: tau must be in (0,1], gamma in [0,1)");
    }
    Rng init_rng(init_seed);
    const int od = static_cast<int>(obs_dim);
    const int ad = static_cast<int>(act_dim);
    actor_ = make_mlp({od, cfg.hidden1, cfg.hidden2, ad}, OutputSquash::UnitInterval, init_rng);
    critic_ = make_mlp({od + ad, cfg.hidden1, cfg.hidden2, 1}, OutputSquash::Linear, init_rng);
    actor_target_ = actor_;
    critic_target_ = critic_;
}

DdpgAgent::DdpgAgent(size_t obs_dim, size_t act_dim, AgentConfig cfg)
    : obs_dim_(obs_dim),
      act_dim_(act_dim),
      cfg_(cfg),
      actor_opt_(cfg.learning_rate),
      critic_opt_(cfg.learning_rate),
      buffer_(cfg.replay_capacity),
      explore_rng_(0) {}

std::vector<double> DdpgAgent::normalized(std::span<const double> obs) const {
    if (!cfg_.normalize_observations) return std::vector<double>(obs.begin(), obs.end());
    return norm_.normalize(obs);
}

Action DdpgAgent::act(const Observation& obs) const {
    if (obs.v.size() != obs_dim_) throw std::invalid_argument("act: observation size mismatch");
    dense::Matrix input(1, static_cast<int>(obs_dim_));
    const std::vector<double> x = normalized(obs.v);
    std::copy(x.begin(), x.end(), input.data.begin());
    const dense::Matrix out = mlp_forward(actor_, input);
    Action a;
    a.coeffs.assign(out.data.begin(), out.data.end());
    return a;
}

Action DdpgAgent::act(const Observation& obs, double noise_scale) {
    Action a = static_cast<const DdpgAgent*>(this)->act(obs);
    if (noise_scale > 0.0) {
        for (double& c : a.coeffs) {
            c = std::clamp(c + noise_scale * explore_rng_.gaussian(), 0.0, 1.0);
        }
    }
    return a;
}

Action DdpgAgent::random_action() {
    Action a;
    a.coeffs.resize(act_dim_);
    for (double& c : a.coeffs) c = explore_rng_.uniform();
    return a;
}

void DdpgAgent::observe_for_norm(const Observation& obs) {
    if (cfg_.normalize_observations) norm_.update(obs.v);
}

void DdpgAgent::add_transition(const Observation& s, const Action& a, double r,
                               const Observation& s_next, bool done) {
    Transition t;
    t.s = s.v;
    t.a = a.coeffs;
    t.r = r;
    t.s_next = s_next.v;
    t.done = done;
    buffer_.push(std::move(t));
}

bool DdpgAgent::ready_to_train() const {
    const size_t need = std::max<size_t>(cfg_.batch_size, cfg_.warmup_steps);
    return buffer_.size() >= need;
}

TrainDiagnostics DdpgAgent::train_step() {
    if (!ready_to_train()) throw std::logic_error("train_step: buffer not warm");
    const int b = cfg_.batch_size;
    const int od = static_cast<int>(obs_dim_);
    const int ad = static_cast<int>(act_dim_);
    const std::vector<size_t> idx = buffer_.sample_indices(b, explore_rng_);

    dense::Matrix s(b, od), s_next(b, od), sa(b, od + ad);
    std::vector<double> r(b);
    std::vector<double> not_done(b);
    for (int i = 0; i < b; ++i) {
        const Transition& t = buffer_[idx[i]];
        const std::vector<double> ns = normalized(t.s);
        const std::vector<double> nn = normalized(t.s_next);
        std::copy(ns.begin(), ns.end(), s[i]);
        std::copy(nn.begin(), nn.end(), s_next[i]);
        std::copy(ns.begin(), ns.end(), sa[i]);
        std::copy(t.a.begin(), t.a.end(), sa[i] + od);
        r[i] = t.r * cfg_.reward_scale;
        not_done[i] = t.done ? 0.0 : 1.0;
    }

    // critic target: y = r + gamma (1-d) Q'(s', mu'(s'))
    const dense::Matrix a_next = mlp_forward(actor_target_, s_next);
    dense::Matrix sa_next(b, od + ad);
    for (int i = 0; i < b; ++i) {
        std::copy(s_next[i], s_next[i] + od, sa_next[i]);
        std::copy(a_next[i], a_next[i] + ad, sa_next[i] + od);
    }
    const dense::Matrix q_next = mlp_forward(critic_target_, sa_next);

    const dense::Matrix q = mlp_forward(critic_, sa);
    dense::Matrix dq(b, 1);
    double critic_loss = 0.0;
    for (int i = 0; i < b; ++i) {
        const double y = r[i] + cfg_.gamma * not_done[i] * q_next[i][0];
        const double err = q[i][0] - y;
        critic_loss += err * err / b;
        dq[i][0] = 2.0 * err / b;
    }
    if (!std::isfinite(critic_loss)) {
        throw std::runtime_error("train_step: non-finite critic loss");
    }
    const MlpGradients critic_grads = mlp_backward(critic_, sa, dq);
    critic_opt_.step(critic_, critic_grads);

    // actor ascends Q(s, mu(s)) through the updated critic
    const dense::Matrix mu = mlp_forward(actor_, s);
    dense::Matrix sa_mu(b, od + ad);
    for (int i = 0; i < b; ++i) {
        std::copy(s[i], s[i] + od, sa_mu[i]);
        std::copy(mu[i], mu[i] + ad, sa_mu[i] + od);
    }
    const dense::Matrix q_mu = mlp_forward(critic_, sa_mu);
    double actor_objective = 0.0;
    for (int i = 0; i < b; ++i) actor_objective += q_mu[i][0] / b;
    if (!std::isfinite(actor_objective)) {
        throw std::runtime_error("train_step: non-finite actor objective");
    }
    dense::Matrix dqa(b, 1);
    for (int i = 0; i < b; ++i) dqa[i][0] = -1.0 / b;  // maximize mean Q
    const MlpGradients critic_input_grads = mlp_backward(critic_, sa_mu, dqa);
    dense::Matrix da(b, ad);
    for (int i = 0; i < b; ++i) {
        for (int j = 0; j < ad; ++j) da[i][j] = critic_input_grads.input_grad[i][od + j];
    }
    const MlpGradients actor_grads = mlp_backward(actor_, s, da);
    actor_opt_.step(actor_, actor_grads);

    soft_update(critic_, critic_target_, cfg_.tau);
    soft_update(actor_, actor_target_, cfg_.tau);
    ++train_steps_;
    return {critic_loss, actor_objective};
}

// ---- checkpoint io ---------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'G', 'C', 'K', 'P', 'T', '0', '0', '1'};

void write_u64(std::ostream& os, std::uint64_t v) {
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t read_u64(std::istream& is) {
    unsigned char buf[8];
    is.read(reinterpret_cast<char*>(buf), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return v;
}

void write_f64(std::ostream& os, double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    write_u64(os, bits);
}

double read_f64(std::istream& is) {
    const std::uint64_t bits = read_u64(is);
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
}

void write_f64_vec(std::ostream& os, const std::vector<double>& v) {
    write_u64(os, v.size());
    for (double d : v) write_f64(os, d);
}

std::vector<double> read_f64_vec(std::istream& is) {
    std::vector<double> v(read_u64(is));
    for (double& d : v) d = read_f64(is);
    return v;
}

void write_mlp(std::ostream& os, const MlpParams& mlp) {
    write_u64(os, mlp.squash == OutputSquash::UnitInterval ? 1 : 0);
    write_u64(os, mlp.layers.size());
    for (const auto& l : mlp.layers) {
        write_u64(os, l.w.rows);
        write_u64(os, l.w.cols);
        write_f64_vec(os, l.w.data);
        write_f64_vec(os, l.b);
    }
}

MlpParams read_mlp(std::istream& is) {
    MlpParams mlp;
    mlp.squash = read_u64(is) ? OutputSquash::UnitInterval : OutputSquash::Linear;
    mlp.layers.resize(read_u64(is));
    for (auto& l : mlp.layers) {
        const int rows = static_cast<int>(read_u64(is));
        const int cols = static_cast<int>(read_u64(is));
        l.w = dense::Matrix(rows, cols);
        l.w.data = read_f64_vec(is);
        l.b = read_f64_vec(is);
    }
    return mlp;
}

void write_adam(std::ostream& os, const AdamOptimizer& opt) {
    write_f64(os, opt.learning_rate);
    write_u64(os, static_cast<std::uint64_t>(opt.t));
    write_u64(os, opt.m.size());
    for (size_t l = 0; l < opt.m.size(); ++l) {
        write_u64(os, opt.m[l].w.rows);
        write_u64(os, opt.m[l].w.cols);
        write_f64_vec(os, opt.m[l].w.data);
        write_f64_vec(os, opt.m[l].b);
        write_f64_vec(os, opt.v[l].w.data);
        write_f64_vec(os, opt.v[l].b);
    }
}

void read_adam(std::istream& is, AdamOptimizer& opt) {
    opt.learning_rate = read_f64(is);
    opt.t = static_cast<long>(read_u64(is));
    const size_t n = read_u64(is);
    opt.m.resize(n);
    opt.v.resize(n);
    for (size_t l = 0; l < n; ++l) {
        const int rows = static_cast<int>(read_u64(is));
        const int cols = static_cast<int>(read_u64(is));
        opt.m[l].w = dense::Matrix(rows, cols);
        opt.m[l].w.data = read_f64_vec(is);
        opt.m[l].b = read_f64_vec(is);
        opt.v[l].w = dense::Matrix(rows, cols);
        opt.v[l].w.data = read_f64_vec(is);
        opt.v[l].b = read_f64_vec(is);
    }
}

void write_string(std::ostream& os, const std::string& s) {
    write_u64(os, s.size());
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& is) {
    std::string s(read_u64(is), '\0');
    is.read(s.data(), static_cast<std::streamsize>(s.size()));
    return s;
}

}  // namespace

void DdpgAgent::save_checkpoint(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write checkpoint: " + path);
    os.write(kMagic, sizeof kMagic);
    write_u64(os, obs_dim_);
    write_u64(os, act_dim_);
    write_f64(os, cfg_.learning_rate);
    write_u64(os, static_cast<std::uint64_t>(cfg_.batch_size));
    write_f64(os, cfg_.gamma);
    write_f64(os, cfg_.tau);
    write_u64(os, cfg_.replay_capacity);
    write_u64(os, static_cast<std::uint64_t>(cfg_.warmup_steps));
    write_u64(os, static_cast<std::uint64_t>(cfg_.hidden1));
    write_u64(os, static_cast<std::uint64_t>(cfg_.hidden2));
    write_f64(os, cfg_.noise_sigma_start);
    write_f64(os, cfg_.noise_sigma_end);
    write_f64(os, cfg_.reward_scale);
    write_u64(os, cfg_.normalize_observations ? 1 : 0);
    write_mlp(os, actor_);
    write_mlp(os, critic_);
    write_mlp(os, actor_target_);
    write_mlp(os, critic_target_);
    write_adam(os, actor_opt_);
    write_adam(os, critic_opt_);
    write_u64(os, static_cast<std::uint64_t>(norm_.count));
    write_f64_vec(os, norm_.mean);
    write_f64_vec(os, norm_.m2);
    write_string(os, explore_rng_.save_state());
    write_u64(os, static_cast<std::uint64_t>(train_steps_));
    if (!os) throw std::runtime_error("checkpoint write failed: " + path);
}

DdpgAgent DdpgAgent::load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0) {
        throw std::runtime_error("bad checkpoint magic: " + path);
    }
    const size_t obs_dim = read_u64(is);
    const size_t act_dim = read_u64(is);
    AgentConfig cfg;
    cfg.learning_rate = read_f64(is);
    cfg.batch_size = static_cast<int>(read_u64(is));
    cfg.gamma = read_f64(is);
    cfg.tau = read_f64(is);
    cfg.replay_capacity = read_u64(is);
    cfg.warmup_steps = static_cast<int>(read_u64(is));
    cfg.hidden1 = static_cast<int>(read_u64(is));
    cfg.hidden2 = static_cast<int>(read_u64(is));
    cfg.noise_sigma_start = read_f64(is);
    cfg.noise_sigma_end = read_f64(is);
    cfg.reward_scale = read_f64(is);
    cfg.normalize_observations = read_u64(is) != 0;
    DdpgAgent agent(obs_dim, act_dim, cfg);
    agent.actor_ = read_mlp(is);
    agent.critic_ = read_mlp(is);
    agent.actor_target_ = read_mlp(is);
    agent.critic_target_ = read_mlp(is);
    read_adam(is, agent.actor_opt_);
    read_adam(is, agent.critic_opt_);
    agent.norm_.count = static_cast<long long>(read_u64(is));
    agent.norm_.mean = read_f64_vec(is);
    agent.norm_.m2 = read_f64_vec(is);
    agent.explore_rng_.restore_state(read_string(is));
    agent.train_steps_ = static_cast<long>(read_u64(is));
    if (!is) throw std::runtime_error("truncated checkpoint: " + path);
    return agent;
}

}  // namespace gridcascade
