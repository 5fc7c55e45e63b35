// kasa: single entry-point CLI for SVD inspection, truncation, gradient
// checking, adapter training, and the synthetic-task experiment harness.

#include <omp.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "kasa/adapter.hpp"
#include "kasa/baselines.hpp"
#include "kasa/harness.hpp"
#include "kasa/objective.hpp"
#include "kasa/rng.hpp"
#include "kasa/svd.hpp"
#include "kasa/trainer.hpp"

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

struct TaskOptions {
    std::size_t n = 64;
    std::size_t m = 48;
    std::size_t planted = 8;
    std::size_t delta = 4;
    double noise_scale = 0.5;
    std::size_t samples = 256;
    std::uint64_t seed = 1;
};

struct HarnessOptions {
    std::size_t r = 8;
    std::size_t k = 8;
    std::size_t n_seeds = 10;
    double alpha = 16.0;
    double init_std = 0.02;
    std::vector<std::string> methods = {"kasa", "lora", "pissa", "milora"};
    std::vector<std::size_t> k_grid = {0, 2, 4, 8, 16, 32};
    std::vector<std::size_t> r_grid = {1, 2, 4, 8, 16, 32};
};

void add_task_options(CLI::App* cmd, TaskOptions& t) {
    cmd->add_option("--task.n", t.n, "teacher output dimension");
    cmd->add_option("--task.m", t.m, "teacher input dimension");
    cmd->add_option("--task.planted", t.planted, "planted noise rank in the base");
    cmd->add_option("--task.delta", t.delta, "rank of the task update");
    cmd->add_option("--task.noise-scale", t.noise_scale, "planted singular value scale");
    cmd->add_option("--task.samples", t.samples, "total sample count (80/20 split)");
    cmd->add_option("--task.seed", t.seed, "task generation seed");
}

void add_train_options(CLI::App* cmd, kasa::TrainConfig& c) {
    cmd->add_option("--train.lr", c.learning_rate, "learning rate");
    cmd->add_option("--train.steps", c.steps, "optimization steps");
    cmd->add_option("--train.batch-size", c.batch_size, "mini-batch size (0 = full batch)");
    cmd->add_option("--train.beta", c.beta, "sigma regularization weight");
    cmd->add_option("--train.gamma", c.gamma, "orthogonality regularization weight");
    cmd->add_option("--train.weight-decay", c.weight_decay, "decoupled weight decay");
    cmd->add_option("--train.seed", c.seed, "training seed");
    cmd->add_flag("--train.average-aux", c.average_aux,
                  "average auxiliary losses over sigma parameter groups");
    cmd->add_flag("--train.linear-lr", c.linear_lr_schedule, "linear learning rate decay");
    cmd->add_option_function<std::string>(
           "--train.optimizer",
           [&c](const std::string& name) {
               if (name == "sgd") {
                   c.optimizer = kasa::Optimizer::sgd;
               } else if (name == "adamw") {
                   c.optimizer = kasa::Optimizer::adam_decoupled_wd;
               } else {
                   throw CLI::ValidationError("--train.optimizer", "must be sgd or adamw");
               }
           },
           "optimizer: sgd or adamw")
        ->default_str("adamw");
}

void add_harness_options(CLI::App* cmd, HarnessOptions& h) {
    cmd->add_option("--harness.r", h.r, "adapter rank");
    cmd->add_option("--harness.k", h.k, "truncation rank");
    cmd->add_option("--harness.seeds", h.n_seeds, "number of seeds per cell");
    cmd->add_option("--harness.alpha", h.alpha, "adapter scaling alpha");
    cmd->add_option("--harness.init-std", h.init_std, "init distribution stddev");
    cmd->add_option("--harness.methods", h.methods, "methods to compare");
    cmd->add_option("--harness.k-grid", h.k_grid, "truncation sweep grid");
    cmd->add_option("--harness.r-grid", h.r_grid, "rank sweep grid");
}

void echo_config(const CLI::App& cmd, const std::string& outdir) {
    std::filesystem::create_directories(outdir);
    std::ofstream f(outdir + "/effective_config.ini");
    f << cmd.config_to_str(true, false);
}

kasa::HarnessConfig harness_config(const kasa::TrainConfig& train, const HarnessOptions& h) {
    kasa::HarnessConfig hc;
    hc.train = train;
    hc.alpha = h.alpha;
    hc.init_std = h.init_std;
    return hc;
}

int run_svd(const std::string& path) {
    const kasa::Matrix m = kasa::load_text(path);
    const kasa::SvdFactors f = kasa::svd(m);
    std::printf("dims %zu x %zu\n", m.rows(), m.cols());
    std::printf("spectrum");
    for (double s : f.sigma) std::printf(" %.17g", s);
    std::printf("\n");
    const double denom = std::max(1.0, kasa::frobenius_norm(m));
    const double err = kasa::frobenius_norm(kasa::sub(kasa::reconstruct(f), m)) / denom;
    std::printf("reconstruction_error %.17g\n", err);
    std::printf("defect_u %.17g\n", kasa::orthogonality_defect(f.u));
    std::printf("defect_v %.17g\n", kasa::orthogonality_defect(f.v));
    return 0;
}

int run_truncate(const std::string& path, std::size_t k, const std::string& out) {
    const kasa::Matrix w0 = kasa::load_text(path);
    const kasa::TruncatedBase base = kasa::truncate_base(w0, k);
    kasa::save_text(base.w_world, out);
    double dropped_sq = 0.0;
    for (double s : base.dropped_sigma) dropped_sq += s * s;
    const double err = kasa::frobenius_norm(kasa::sub(w0, base.w_world));
    std::printf("k %zu\n", k);
    std::printf("eckart_young_error %.17g\n", err);
    std::printf("dropped_sigma_rss %.17g\n", std::sqrt(dropped_sq));
    return 0;
}

int run_gradcheck(std::size_t r, std::size_t n, std::size_t m, std::uint64_t seed,
                  double beta, double gamma, double tol) {
    kasa::Rng rng(seed);
    kasa::Matrix w0(n, m);
    for (double& v : w0.data()) v = rng.normal();
    const kasa::TruncatedBase base = kasa::truncate_base(w0, 2);
    kasa::KasaAdapter adapter = kasa::init_kasa(base, r, 16.0, seed + 1);
    // Move off the zero init so every gradient path is exercised.
    for (double& v : adapter.delta_u.data()) v = 0.1 * rng.normal();
    kasa::Batch batch;
    batch.kind = kasa::LossKind::mse;
    batch.inputs = kasa::Matrix(m, 8);
    batch.targets = kasa::Matrix(n, 8);
    for (double& v : batch.inputs.data()) v = rng.normal();
    for (double& v : batch.targets.data()) v = rng.normal();

    const kasa::GradCheckResult res = kasa::grad_check(base, adapter, batch, beta, gamma);
    std::printf("max_rel_error %.17g\n", res.max_rel_error);
    if (!res.ok(tol)) {
        std::fprintf(stderr, "gradcheck failed: coordinate %zu exceeds %.3g\n",
                     res.worst_coordinate, tol);
        return kExitNumeric;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    if (const char* threads = std::getenv("KASA_THREADS")) {
        const int t = std::atoi(threads);
        if (t > 0) omp_set_num_threads(t);
    }

    CLI::App app{"KaSA desk-scale adapter laboratory"};
    app.require_subcommand(1);

    // svd
    std::string svd_path;
    CLI::App* cmd_svd = app.add_subcommand("svd", "factor a matrix, print spectrum");
    cmd_svd->add_option("matrix", svd_path, "matrix file (text format)")->required();

    // truncate
    std::string trunc_path, trunc_out = "w_world.mat";
    std::size_t trunc_k = 0;
    CLI::App* cmd_trunc = app.add_subcommand("truncate", "drop the k smallest singular triplets");
    cmd_trunc->add_option("matrix", trunc_path, "matrix file (text format)")->required();
    cmd_trunc->add_option("--k", trunc_k, "number of triplets to drop")->required();
    cmd_trunc->add_option("--out", trunc_out, "output path for the truncated matrix");

    // gradcheck
    std::size_t gc_r = 4;
    std::string gc_dims = "32x24";
    std::uint64_t gc_seed = 7;
    double gc_beta = 1e-4, gc_gamma = 1e-3, gc_tol = 1e-6;
    CLI::App* cmd_gc = app.add_subcommand("gradcheck", "analytic vs finite-difference gradients");
    cmd_gc->add_option("--r", gc_r, "adapter rank");
    cmd_gc->add_option("--dims", gc_dims, "base dimensions, e.g. 32x24");
    cmd_gc->add_option("--seed", gc_seed, "seed");
    cmd_gc->add_option("--beta", gc_beta, "sigma regularization weight");
    cmd_gc->add_option("--gamma", gc_gamma, "orthogonality regularization weight");
    cmd_gc->add_option("--tol", gc_tol, "max relative error tolerance");

    // train
    TaskOptions train_task;
    kasa::TrainConfig train_cfg;
    HarnessOptions train_h;
    std::string train_method = "kasa", train_out = "out";
    CLI::App* cmd_train = app.add_subcommand("train", "one training run, trace + checkpoint");
    cmd_train->set_config("--config");
    cmd_train->add_option("--method", train_method, "kasa | lora | pissa | milora");
    cmd_train->add_option("--out", train_out, "output directory");
    add_task_options(cmd_train, train_task);
    add_train_options(cmd_train, train_cfg);
    add_harness_options(cmd_train, train_h);

    // compare
    TaskOptions cmp_task;
    kasa::TrainConfig cmp_cfg;
    HarnessOptions cmp_h;
    std::string cmp_out = "out";
    CLI::App* cmd_cmp = app.add_subcommand("compare", "equal-budget method comparison");
    cmd_cmp->set_config("--config");
    cmd_cmp->add_option("--out", cmp_out, "output directory");
    add_task_options(cmd_cmp, cmp_task);
    add_train_options(cmd_cmp, cmp_cfg);
    add_harness_options(cmd_cmp, cmp_h);
    cmp_cfg.learning_rate = 5e-3;

    // sweep-k / sweep-r
    TaskOptions swk_task;
    kasa::TrainConfig swk_cfg;
    HarnessOptions swk_h;
    std::string swk_out = "out";
    CLI::App* cmd_swk = app.add_subcommand("sweep-k", "truncation rank sweep");
    cmd_swk->set_config("--config");
    cmd_swk->add_option("--out", swk_out, "output directory");
    add_task_options(cmd_swk, swk_task);
    add_train_options(cmd_swk, swk_cfg);
    add_harness_options(cmd_swk, swk_h);
    swk_cfg.learning_rate = 5e-3;

    TaskOptions swr_task;
    kasa::TrainConfig swr_cfg;
    HarnessOptions swr_h;
    std::string swr_out = "out";
    CLI::App* cmd_swr = app.add_subcommand("sweep-r", "adapter rank sweep");
    cmd_swr->set_config("--config");
    cmd_swr->add_option("--out", swr_out, "output directory");
    add_task_options(cmd_swr, swr_task);
    add_train_options(cmd_swr, swr_cfg);
    add_harness_options(cmd_swr, swr_h);
    swr_cfg.learning_rate = 5e-3;

    // ablation
    TaskOptions abl_task;
    kasa::TrainConfig abl_cfg;
    HarnessOptions abl_h;
    std::string abl_out = "out";
    CLI::App* cmd_abl = app.add_subcommand("ablation", "five-variant component ladder");
    cmd_abl->set_config("--config");
    cmd_abl->add_option("--out", abl_out, "output directory");
    add_task_options(cmd_abl, abl_task);
    add_train_options(cmd_abl, abl_cfg);
    add_harness_options(cmd_abl, abl_h);
    abl_cfg.learning_rate = 5e-3;

    // heatmap
    TaskOptions hm_task;
    kasa::TrainConfig hm_cfg;
    HarnessOptions hm_h;
    std::string hm_out = "out";
    CLI::App* cmd_hm = app.add_subcommand("heatmap", "final |delta_sigma| grid across seeds");
    cmd_hm->set_config("--config");
    cmd_hm->add_option("--out", hm_out, "output directory");
    add_task_options(cmd_hm, hm_task);
    add_train_options(cmd_hm, hm_cfg);
    add_harness_options(cmd_hm, hm_h);
    hm_cfg.learning_rate = 5e-3;

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (cmd_svd->parsed()) return run_svd(svd_path);
        if (cmd_trunc->parsed()) return run_truncate(trunc_path, trunc_k, trunc_out);
        if (cmd_gc->parsed()) {
            std::size_t n = 0, m = 0;
            if (std::sscanf(gc_dims.c_str(), "%zux%zu", &n, &m) != 2 || n == 0 || m == 0) {
                std::fprintf(stderr, "bad --dims, expected NxM\n");
                return kExitUsage;
            }
            return run_gradcheck(gc_r, n, m, gc_seed, gc_beta, gc_gamma, gc_tol);
        }

        if (cmd_train->parsed()) {
            echo_config(*cmd_train, train_out);
            const TaskOptions& t = train_task;
            const kasa::SynthTask task = kasa::make_task(t.n, t.m, t.planted, t.delta,
                                                         t.noise_scale, t.samples, t.seed);
            kasa::RunReport report;
            if (train_method == "kasa") {
                const kasa::TruncatedBase base = kasa::truncate_base(task.w0, train_h.k);
                kasa::KasaAdapter adapter = kasa::init_kasa(base, train_h.r, train_h.alpha,
                                                            train_cfg.seed, train_h.init_std);
                report = kasa::train_kasa(base, adapter, task.data, train_cfg);
                kasa::save_checkpoint(adapter, train_h.k, train_out + "/adapter.ckpt");
            } else {
                const kasa::Method method = kasa::method_from_name(train_method);
                kasa::LowRankAdapter adapter =
                    method == kasa::Method::lora
                        ? kasa::init_lora(task.w0, train_h.r, train_h.alpha, train_cfg.seed,
                                          train_h.init_std)
                    : method == kasa::Method::pissa
                        ? kasa::init_pissa(task.w0, train_h.r, train_cfg.seed)
                        : kasa::init_milora(task.w0, train_h.r, train_cfg.seed);
                report = kasa::train_lowrank(adapter, task.data, train_cfg);
                kasa::save_checkpoint(adapter, train_out + "/adapter.ckpt");
            }
            kasa::save_trace(report, train_out + "/trace.txt");
            std::printf("final_train %.17g final_test %.17g params %zu steps %zu\n",
                        report.final_train_metric, report.final_test_metric,
                        report.parameter_count, report.trace.size());
            return 0;
        }

        if (cmd_cmp->parsed()) {
            echo_config(*cmd_cmp, cmp_out);
            const TaskOptions& t = cmp_task;
            const kasa::SynthTask task = kasa::make_task(t.n, t.m, t.planted, t.delta,
                                                         t.noise_scale, t.samples, t.seed);
            std::vector<kasa::Method> methods;
            for (const std::string& name : cmp_h.methods) {
                methods.push_back(kasa::method_from_name(name));
            }
            const kasa::CompareTable table = kasa::compare(
                task, methods, cmp_h.r, cmp_h.k, harness_config(cmp_cfg, cmp_h), cmp_h.n_seeds);
            kasa::write_compare_csv(table, cmp_out + "/compare.csv");
            for (const kasa::CompareRow& row : table.rows) {
                std::printf("%s median_test %.17g iqr %.17g params %zu\n", row.method.c_str(),
                            row.median_test, row.iqr_test, row.param_count);
            }
            return 0;
        }

        if (cmd_swk->parsed() || cmd_swr->parsed()) {
            const bool is_k = cmd_swk->parsed();
            const TaskOptions& t = is_k ? swk_task : swr_task;
            const HarnessOptions& h = is_k ? swk_h : swr_h;
            const kasa::TrainConfig& cfg = is_k ? swk_cfg : swr_cfg;
            const std::string& out = is_k ? swk_out : swr_out;
            echo_config(is_k ? *cmd_swk : *cmd_swr, out);
            const kasa::SynthTask task = kasa::make_task(t.n, t.m, t.planted, t.delta,
                                                         t.noise_scale, t.samples, t.seed);
            const kasa::SweepResult res =
                is_k ? kasa::sweep_truncation(task, h.k_grid, h.r, harness_config(cfg, h),
                                              h.n_seeds)
                     : kasa::sweep_rank(task, h.r_grid, h.k, harness_config(cfg, h), h.n_seeds);
            kasa::write_sweep_csv(res, out + "/sweep.csv");
            for (std::size_t i = 0; i < res.values.size(); ++i) {
                std::printf("%s=%zu median_test %.17g iqr %.17g\n", res.axis.c_str(),
                            res.values[i], res.median_test[i], res.iqr_test[i]);
            }
            return 0;
        }

        if (cmd_abl->parsed()) {
            echo_config(*cmd_abl, abl_out);
            const TaskOptions& t = abl_task;
            const kasa::SynthTask task = kasa::make_task(t.n, t.m, t.planted, t.delta,
                                                         t.noise_scale, t.samples, t.seed);
            const kasa::CompareTable table = kasa::ablation(
                task, abl_h.r, abl_h.k, harness_config(abl_cfg, abl_h), abl_h.n_seeds);
            kasa::write_compare_csv(table, abl_out + "/ablation.csv");
            for (const kasa::CompareRow& row : table.rows) {
                std::printf("%s median_test %.17g\n", row.method.c_str(), row.median_test);
            }
            return 0;
        }

        if (cmd_hm->parsed()) {
            echo_config(*cmd_hm, hm_out);
            const TaskOptions& t = hm_task;
            const kasa::SynthTask task = kasa::make_task(t.n, t.m, t.planted, t.delta,
                                                         t.noise_scale, t.samples, t.seed);
            const kasa::HarnessConfig hc = harness_config(hm_cfg, hm_h);
            std::vector<kasa::RunReport> reports(hm_h.n_seeds);
#pragma omp parallel for schedule(dynamic)
            for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(hm_h.n_seeds); ++i) {
                reports[static_cast<std::size_t>(i)] =
                    kasa::run_cell(task, kasa::Method::kasa, hm_h.r, hm_h.k, hc,
                                   hc.train.seed + static_cast<std::uint64_t>(i));
            }
            kasa::export_heatmap(reports, hm_out + "/heatmap.txt");
            std::printf("heatmap %zu x %zu written\n", reports.size(), hm_h.r);
            return 0;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitData;
    }
    return kExitUsage;
}
