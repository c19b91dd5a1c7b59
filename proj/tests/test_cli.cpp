// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#ifndef ETHERKIT_CLI_PATH
#error "ETHERKIT_CLI_PATH must point at the built binary"
#endif

namespace {

namespace fs = std::filesystem;

struct RunResult {
    int exit_code = -1;
    std::string output;
};

fs::path temp_path(const std::string& name) {
    return fs::temp_directory_path() / ("etherkit_cli_" + name);
}

RunResult run_cli(const std::string& args) {
    const fs::path out_file = temp_path("stdout.txt");
    const std::string cmd = std::string(ETHERKIT_CLI_PATH) + " " + args + " > " +
                            out_file.string() + " 2>&1";
    const int raw = std::system(cmd.c_str());
    RunResult result;
    result.exit_code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    std::ifstream in(out_file);
    result.output.assign((std::istreambuf_iterator<char>(in)),
                         std::istreambuf_iterator<char>());
    fs::remove(out_file);
    return result;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
}

// Tiny task so the CLI round-trips stay fast.
void write_small_config(const fs::path& path, const std::string& extra = "") {
    std::ofstream out(path);
    out << "input_dim=8\n"
           "hidden_dim=16\n"
           "output_dim=4\n"
           "pretrain_samples=256\n"
           "finetune_samples=128\n"
           "pretrain_seed=5\n"
           "shift_seed=6\n"
           "shift_magnitude=1.0\n"
           "epochs=4\n"
           "seed=42\n"
        << extra;
}

} // namespace

TEST_CASE("verify passes on a fresh build and lists the four suites") {
    const RunResult r = run_cli("verify");
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("[suite tensor-core]") != std::string::npos);
    CHECK(r.output.find("[suite adapters]") != std::string::npos);
    CHECK(r.output.find("[suite metrics]") != std::string::npos);
    CHECK(r.output.find("[suite harness]") != std::string::npos);
    CHECK(r.output.find("VERIFY: PASS") != std::string::npos);
}

TEST_CASE("fault injection trips the reflection distance check") {
    const RunResult r = run_cli("verify --inject-fault skip-normalize");
    CHECK(r.exit_code == 1);
    CHECK(r.output.find("householder-unit-distance") != std::string::npos);
    CHECK(r.output.find("VERIFY: FAIL") != std::string::npos);
}

TEST_CASE("sweep is deterministic byte-for-byte") {
    const fs::path cfg = temp_path("sweep.cfg");
    write_small_config(cfg, "methods=ether,oft\nlr_grid=0.01,0.1,1,10,100\nthreads=2\n");
    const fs::path out = temp_path("sweep.csv");

    const RunResult r1 =
        run_cli("sweep --config " + cfg.string() + " --out " + out.string());
    REQUIRE(r1.exit_code == 0);
    const std::string csv1 = read_file(out);
    const RunResult r2 =
        run_cli("sweep --config " + cfg.string() + " --out " + out.string());
    REQUIRE(r2.exit_code == 0);

    CHECK(csv1 == read_file(out));

    // Header comments echo the effective config; the header row follows.
    CHECK(csv1.rfind("# methods=ether,oft", 0) == 0);
    CHECK(csv1.find("method,n,lr,epoch,loss,transform_distance,weights_distance,"
                    "delta_he,diverged") != std::string::npos);

    // Row count: methods x grid x epochs (+ comments + header).
    std::size_t data_rows = 0;
    for (std::size_t pos = 0; (pos = csv1.find('\n', pos)) != std::string::npos; ++pos) {
        ++data_rows;
    }
    const std::size_t comment_lines = 25; // echo() emits one line per key
    CHECK(data_rows == comment_lines + 1 + 2 * 5 * 4);

    fs::remove(cfg);
    fs::remove(out);
}

TEST_CASE("train writes a loadable checkpoint") {
    const fs::path cfg = temp_path("train.cfg");
    write_small_config(cfg, "method=etherplus\nepochs=3\n");
    const fs::path ckpt = temp_path("adapter.etck");

    const RunResult r =
        run_cli("train --config " + cfg.string() + " --out " + ckpt.string());
    REQUIRE(r.exit_code == 0);
    CHECK(r.output.find("epoch 0") != std::string::npos);
    CHECK(fs::exists(ckpt));

    const std::string bytes = read_file(ckpt);
    CHECK(bytes.substr(0, 4) == "ETCK");

    fs::remove(cfg);
    fs::remove(ckpt);
}

TEST_CASE("perturb and ablate emit their schemas") {
    const fs::path cfg = temp_path("pa.cfg");
    write_small_config(cfg,
                       "methods=ether,etherplus,oft\n"
                       "strength_grid=0,1,2\n"
                       "block_grid=1,2\n"
                       "epochs=2\n");
    const fs::path pout = temp_path("perturb.csv");
    const fs::path aout = temp_path("ablate.csv");

    const RunResult rp =
        run_cli("perturb --config " + cfg.string() + " --out " + pout.string());
    REQUIRE(rp.exit_code == 0);
    const std::string perturb_csv = read_file(pout);
    CHECK(perturb_csv.find("method,strength,deviation") != std::string::npos);
    CHECK(perturb_csv.find("ether,") != std::string::npos);

    const RunResult ra =
        run_cli("ablate --config " + cfg.string() + " --out " + aout.string());
    REQUIRE(ra.exit_code == 0);
    const std::string ablate_csv = read_file(aout);
    CHECK(ablate_csv.find("method,n,two_sided,params,ops_mul,ops_add,final_loss") !=
          std::string::npos);

    fs::remove(cfg);
    fs::remove(pout);
    fs::remove(aout);
}

TEST_CASE("exit codes") {
    // Unknown command / bad flag value: config error.
    CHECK(run_cli("frobnicate").exit_code == 2);
    CHECK(run_cli("sweep --blocks x").exit_code == 2);
    const RunResult unknown_key = run_cli("train --lr notanumber");
    CHECK(unknown_key.exit_code == 2);

    // Missing output path is a config error; unwritable path an I/O error.
    const fs::path cfg = temp_path("exit.cfg");
    write_small_config(cfg, "methods=ether\nepochs=1\nlr_grid=0.01,0.1,1,10,100\n");
    CHECK(run_cli("sweep --config " + cfg.string()).exit_code == 2);
    CHECK(run_cli("sweep --config " + cfg.string() +
                  " --out /nonexistent-dir/x.csv").exit_code == 3);
    CHECK(run_cli("train --config /nonexistent-dir/missing.cfg").exit_code == 3);
    fs::remove(cfg);
}
