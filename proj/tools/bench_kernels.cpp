// Times the serial reference kernels against the OpenMP variants on the
// workloads the toolkit actually runs: dense matmul/LU, Newton solves of the
// 118-bus case, batched DDPG optimizer steps and evaluation episodes.

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "gridcascade/acpf.hpp"
#include "gridcascade/case_model.hpp"
#include "gridcascade/cascade_env.hpp"
#include "gridcascade/ddpg.hpp"
#include "gridcascade/dense.hpp"
#include "gridcascade/harness.hpp"
#include "gridcascade/rng.hpp"

using namespace gridcascade;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
    fn();  // warm up
    const auto start = std::chrono::steady_clock::now();
    for (int i = 0; i < reps; ++i) fn();
    const auto stop = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(stop - start).count() / reps;
}

void report(const char* name, double serial_ms, double parallel_ms) {
    std::printf("%-28s %10.3f ms %10.3f ms %8.2fx\n", name, serial_ms, parallel_ms,
                serial_ms / parallel_ms);
}

}  // namespace

int main(int argc, char** argv) {
    const std::string data_dir = argc > 1 ? argv[1] : "data";
#ifdef _OPENMP
    std::printf("OpenMP enabled, max threads = %d\n", omp_get_max_threads());
#else
    std::printf("built without OpenMP; both columns run the same serial code\n");
#endif
    std::printf("%-28s %13s %13s %9s\n", "kernel", "serial", "openmp", "speedup");

    Rng rng(7);

    {
        dense::Matrix a(128, 651), b(256, 651), c;
        for (double& v : a.data) v = rng.uniform(-1, 1);
        for (double& v : b.data) v = rng.uniform(-1, 1);
        const double s = time_ms([&] { dense::matmul_serial(a, dense::Trans::None, b,
                                                            dense::Trans::Yes, c); }, 20);
        dense::set_parallel(true);
        const double p = time_ms([&] { dense::matmul(a, dense::Trans::None, b,
                                                     dense::Trans::Yes, c); }, 20);
        report("matmul 128x651 * 651x256", s, p);
    }

    {
        dense::Matrix a(400, 400);
        for (double& v : a.data) v = rng.uniform(-1, 1);
        for (int i = 0; i < 400; ++i) a[i][i] += 400.0;
        std::vector<double> rhs(400, 1.0);
        const double s = time_ms([&] {
            auto rhs_copy = rhs;
            dense::solve_linear_serial(a, rhs_copy);
        }, 10);
        const double p = time_ms([&] {
            auto rhs_copy = rhs;
            dense::solve_linear(a, rhs_copy);
        }, 10);
        report("LU solve 400x400", s, p);
    }

    const Network net118 = load_case_file(data_dir + "/case118.txt");
    {
        PfOptions opts;
        const double s = time_ms([&] {
            dense::set_parallel(false);
            solve_case(net118, opts);
        }, 10);
        const double p = time_ms([&] {
            dense::set_parallel(true);
            solve_case(net118, opts);
        }, 10);
        report("newton solve case118", s, p);
    }

    {
        AgentConfig cfg;
        cfg.hidden1 = 256;
        cfg.hidden2 = 256;
        cfg.warmup_steps = cfg.batch_size;
        DdpgAgent agent(651, 54, cfg, 1, 2);
        Rng fill(3);
        for (int i = 0; i < cfg.batch_size; ++i) {
            Observation s, s2;
            s.v.resize(651);
            s2.v.resize(651);
            for (double& v : s.v) v = fill.uniform(-1, 1);
            for (double& v : s2.v) v = fill.uniform(-1, 1);
            Action a;
            a.coeffs.assign(54, 0.5);
            agent.add_transition(s, a, fill.uniform(), s2, false);
        }
        DdpgAgent serial_agent = agent;
        const double s = time_ms([&] {
            dense::set_parallel(false);
            serial_agent.train_step();
        }, 10);
        DdpgAgent par_agent = agent;
        const double p = time_ms([&] {
            dense::set_parallel(true);
            par_agent.train_step();
        }, 10);
        report("ddpg train step (118-bus)", s, p);
    }

    {
        const EnvConfig cfg = [] {
            EnvConfig c = preset_ieee118();
            c.attack_seed = 9;
            return c;
        }();
        HarnessOptions serial_opts;
        serial_opts.parallel_eval = false;
        HarnessOptions par_opts;
        dense::set_parallel(true);
        AgentConfig acfg;
        acfg.hidden1 = 256;
        acfg.hidden2 = 256;
        DdpgAgent agent(651, 54, acfg, 1, 2);
        const double s = time_ms([&] {
            dense::set_parallel(false);
            evaluate(agent, cfg, net118, 20, 9, serial_opts);
        }, 3);
        const double p = time_ms([&] {
            dense::set_parallel(true);
            evaluate(agent, cfg, net118, 20, 9, par_opts);
        }, 3);
        report("evaluate 20 episodes x118", s, p);
    }

    return 0;
}
