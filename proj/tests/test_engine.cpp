#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "tlens/experiments.hpp"

using namespace tlens;

namespace {

BinaryTask tiny_task(std::uint64_t seed) { return synth_images(0, 1, 24, 16, seed); }

RunSpec tiny_spec(std::size_t steps) {
    RunSpec rs;
    rs.arch.input_dim = 64;
    rs.arch.hidden_dims = {6};
    rs.optim.gamma = 0.05;
    rs.steps = steps;
    rs.batch_size = 8;
    rs.init_seed = 3;
    rs.batch_seed = 3;
    rs.test_subset = 8;
    rs.track_train = true;
    rs.smoother_on = true;
    rs.telescoped_residuals = true;
    rs.log_every = 5;
    return rs;
}

// Drop the timing field; everything else must be byte-identical.
std::string strip_wall(const std::string& text) {
    std::stringstream in(text), out;
    std::string line;
    while (std::getline(in, line)) {
        const auto pos = line.find(",\"wall_ms\":");
        if (pos != std::string::npos) {
            const auto end = line.find_first_of(",}", pos + 11);
            line.erase(pos, end - pos);
        }
        out << line << '\n';
    }
    return out.str();
}

}  // namespace

TEST_CASE("identical configs produce byte-identical logs modulo timing") {
    const BinaryTask task = tiny_task(1);
    std::string logs[2];
    for (int rep = 0; rep < 2; ++rep) {
        RunSpec rs = tiny_spec(20);
        rs.out_jsonl = "/tmp/tlens_det_" + std::to_string(rep) + ".jsonl";
        TrainEngine eng(rs, task.train, task.test);
        eng.init_fresh();
        eng.run();
        logs[rep] = strip_wall(read_text_file(rs.out_jsonl));
        std::remove(rs.out_jsonl.c_str());
    }
    CHECK(logs[0] == logs[1]);
    CHECK(logs[0].find("wall_ms") == std::string::npos);
}

TEST_CASE("save-then-resume reproduces the uninterrupted run exactly") {
    const BinaryTask task = tiny_task(2);

    RunSpec rs = tiny_spec(40);
    rs.out_jsonl = "/tmp/tlens_full.jsonl";
    TrainEngine full(rs, task.train, task.test);
    full.init_fresh();
    full.run();
    const auto final_full = full.last_record();

    RunSpec rs2 = tiny_spec(40);
    rs2.out_jsonl = "/tmp/tlens_part.jsonl";
    TrainEngine part(rs2, task.train, task.test);
    part.init_fresh();
    part.run_steps(17);
    const Checkpoint ck = part.make_checkpoint();

    RunSpec rs3 = tiny_spec(40);
    rs3.out_jsonl = "/tmp/tlens_part.jsonl";
    TrainEngine cont(rs3, task.train, task.test);
    cont.init_from_checkpoint(ck);
    CHECK(cont.step() == 17);
    cont.run();

    // All step-40 metrics agree to 1e-12 (and the parameters bitwise).
    for (auto it = final_full.begin(); it != final_full.end(); ++it) {
        if (it.key() == "wall_ms") continue;
        const double a = it.value().is_number() ? it.value().get<double>() : 0.0;
        const double b = cont.last_record().at(it.key()).is_number()
                             ? cont.last_record().at(it.key()).get<double>()
                             : 0.0;
        CHECK(std::fabs(a - b) <= 1e-12 * (std::fabs(a) + 1.0));
    }
    CHECK(full.params().values == cont.params().values);
    std::remove("/tmp/tlens_full.jsonl");
    std::remove("/tmp/tlens_part.jsonl");
}

TEST_CASE("resume with a mismatched architecture is rejected") {
    const BinaryTask task = tiny_task(3);
    RunSpec rs = tiny_spec(10);
    TrainEngine eng(rs, task.train, task.test);
    eng.init_fresh();
    eng.run_steps(5);
    const Checkpoint ck = eng.make_checkpoint();

    RunSpec wider = tiny_spec(10);
    wider.arch.hidden_dims = {7};
    TrainEngine other(wider, task.train, task.test);
    CHECK_THROWS(other.init_from_checkpoint(ck));
}

TEST_CASE("resume at step zero equals a fresh run") {
    const BinaryTask task = tiny_task(4);
    RunSpec rs = tiny_spec(12);
    TrainEngine a(rs, task.train, task.test);
    a.init_fresh();
    const Checkpoint ck = a.make_checkpoint();
    a.run();

    RunSpec rs2 = tiny_spec(12);
    TrainEngine b(rs2, task.train, task.test);
    b.init_from_checkpoint(ck);
    b.run();
    CHECK(a.params().values == b.params().values);
}

TEST_CASE("kernel-mode and dense-mode sgd agree on the telescoped values") {
    const BinaryTask task = tiny_task(5);

    RunSpec dense = tiny_spec(25);
    dense.track_lin = true;  // forces the dense path
    TrainEngine d(dense, task.train, task.test);
    d.init_fresh();
    d.run();
    CHECK_FALSE(d.train_traces().dense == false);

    RunSpec kernel = tiny_spec(25);
    TrainEngine k(kernel, task.train, task.test);
    k.init_fresh();
    k.run();
    CHECK(k.train_traces().dense == false);  // shallow relu net picks the kernel path

    for (std::size_t i = 0; i < d.train_traces().count(); ++i)
        CHECK(std::fabs(d.train_traces().f_tilde[i] - k.train_traces().f_tilde[i]) <= 1e-10);
    // The two paths reorder the raw-gradient reduction, so agreement is to
    // rounding, not bitwise.
    for (std::size_t i = 0; i < d.params().size(); ++i)
        CHECK(std::fabs(d.params().values[i] - k.params().values[i]) <=
              1e-12 * (std::fabs(d.params().values[i]) + 1.0));
}

TEST_CASE("the master-invariant guard aborts loudly when breached") {
    const BinaryTask task = tiny_task(6);
    RunSpec rs = tiny_spec(50);
    rs.telescoped_residuals = false;  // network residuals drift away from the recursion
    rs.optim.gamma = 0.9;             // and a huge step rate makes it fast
    rs.invariant_tol = 1e-14;
    TrainEngine eng(rs, task.train, task.test);
    eng.init_fresh();
    CHECK_THROWS_WITH_AS(eng.run(), doctest::Contains("master invariant"), std::runtime_error);
}

TEST_CASE("run_experiment writes one jsonl per seed plus a summary") {
    ExperimentConfig cfg;
    cfg.name = "approx-error";
    cfg.output_dir = "/tmp/tlens_exp_files";
    cfg.seeds = {1, 2};
    cfg.steps = 6;
    cfg.log_every = 3;
    cfg.data_source = "synth-images";
    cfg.n_train = 16;
    cfg.n_test = 8;
    cfg.hidden = {5};
    cfg.optimizer = "sgd";
    cfg.gamma = 0.02;
    cfg.batch_size = 4;
    cfg.test_subset = 8;
    std::filesystem::remove_all(cfg.output_dir);
    run_experiment(cfg);
    CHECK(std::filesystem::exists(cfg.output_dir + "/run_g0_seed1.jsonl"));
    CHECK(std::filesystem::exists(cfg.output_dir + "/run_g0_seed2.jsonl"));
    CHECK(std::filesystem::exists(cfg.output_dir + "/summary.csv"));
    CHECK(std::filesystem::exists(cfg.output_dir + "/manifest.json"));
    std::filesystem::remove_all(cfg.output_dir);
}

TEST_CASE("experiment-level resume continues a stopped run to the same metrics") {
    namespace fs = std::filesystem;
    const std::string d_full = "/tmp/tlens_res_full", d_part = "/tmp/tlens_res_part";
    fs::remove_all(d_full);
    fs::remove_all(d_part);

    ExperimentConfig cfg;
    cfg.name = "grokking";
    cfg.seeds = {4};
    cfg.log_every = 10;
    cfg.data_source = "polynomial";
    cfg.poly_d = 12;
    cfg.n_train = 30;
    cfg.n_test = 20;
    cfg.hidden = {20};
    cfg.activation = "quad";
    cfg.quad_eps = 0.2;
    cfg.final_trainable = false;
    cfg.optimizer = "sgd";
    cfg.gamma = 20.0;
    cfg.batch_size = 6;
    cfg.test_subset = 20;
    cfg.smoother = true;

    ExperimentConfig full = cfg;
    full.output_dir = d_full;
    full.steps = 60;
    run_experiment(full);

    ExperimentConfig part = cfg;
    part.output_dir = d_part;
    part.steps = 30;
    part.checkpoint_steps = {30};
    run_experiment(part);

    ExperimentConfig cont = cfg;
    cont.output_dir = d_part;
    cont.steps = 60;
    resume_experiment(d_part + "/run_seed4_step30.ckpt", cont);

    const std::string a = strip_wall(read_text_file(d_full + "/run_seed4.jsonl"));
    const std::string b = strip_wall(read_text_file(d_part + "/run_seed4.jsonl"));
    CHECK(a == b);
    fs::remove_all(d_full);
    fs::remove_all(d_part);
}
