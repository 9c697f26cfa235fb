#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>

#include "doctest.h"
#include "oracles.hpp"

namespace fs = std::filesystem;

namespace {

struct CmdResult {
    int code = -1;
    std::string out;
    std::string err;
};

// Runs the installed binary through the shell, capturing exit code and output.
CmdResult run_cli(const std::string& args, const std::string& env = "") {
    static int counter = 0;
    fs::create_directories("tmp_test_cli");
    const std::string out = "tmp_test_cli/stdout" + std::to_string(counter) + ".txt";
    const std::string err = "tmp_test_cli/stderr" + std::to_string(counter) + ".txt";
    ++counter;
    const std::string cmd =
        env + (env.empty() ? "" : " ") + std::string(HADAMIX_BIN) + " " + args + " > " +
        out + " 2> " + err;
    const int rc = std::system(cmd.c_str());
    CmdResult r;
    if (rc != -1 && WIFEXITED(rc)) r.code = WEXITSTATUS(rc);
    r.out = hadamix::oracle::read_file(out);
    r.err = hadamix::oracle::read_file(err);
    return r;
}

bool contains(const std::string& haystack, const std::string& needle) {
    return haystack.find(needle) != std::string::npos;
}

}  // namespace

TEST_CASE("version and usage errors") {
    const CmdResult v = run_cli("--version");
    CHECK(v.code == 0);
    CHECK(contains(v.out, "hadamix 0.1.0"));

    CHECK(run_cli("").code == 2);            // a subcommand is required
    CHECK(run_cli("frobnicate").code == 2);  // unknown subcommand
    CHECK(run_cli("analyze params --bogus 1").code == 2);
    CHECK(run_cli("train").code == 2);  // --data is required
}

TEST_CASE("analyze params: scaling-table numbers on stdout") {
    const CmdResult r = run_cli("analyze params --d 2048 --layers 24 --paper-table2");
    CHECK(r.code == 0);
    CHECK(contains(r.out, "100,614,144"));
    CHECK(contains(r.out, "1,317,427,200"));

    const CmdResult all = run_cli("analyze params --paper-table2");
    CHECK(all.code == 0);
    CHECK(contains(all.out, "7,068,672"));
    CHECK(contains(all.out, "25,141,248"));
    CHECK(contains(all.out, "56,586,240"));
    CHECK(contains(all.out, "100,614,144"));

    CHECK(run_cli("analyze params").code == 3);  // needs --d or the table flag
}

TEST_CASE("analyze flops: dense count, kernel ops, speedup") {
    const CmdResult r = run_cli("analyze flops --d 768");
    CHECK(r.code == 0);
    CHECK(contains(r.out, "589824"));
    CHECK(contains(r.out, "13,824"));

    const CmdResult j = run_cli("analyze flops --d 1024 --json");
    CHECK(j.code == 0);
    CHECK(contains(j.out, "\"theoretical_speedup\": 102.4"));
    CHECK(contains(j.out, "\"proj_dense_macs\": 1048576.0"));

    CHECK(run_cli("analyze flops --d 40").code == 3);  // unsupported hadamard width
}

TEST_CASE("corpus, zero-step train, generate, export loss") {
    fs::remove_all("tmp_test_cli/run");
    const CmdResult c = run_cli("corpus --out tmp_test_cli/c.txt --bytes 4096 --seed 1");
    CHECK(c.code == 0);
    CHECK(fs::file_size("tmp_test_cli/c.txt") == 4096);
    CHECK(fs::exists("tmp_test_cli/manifest.json"));

    const CmdResult t = run_cli(
        "train --data tmp_test_cli/c.txt --out tmp_test_cli/run --steps 0 --warmup 0 "
        "--d 16 --layers 1 --heads 2 --seq-len 16");
    CHECK(t.code == 0);
    CHECK(hadamix::oracle::read_file("tmp_test_cli/run/train_log.csv") ==
          "step,lr,train_loss,val_loss,wall_ms,cumulative_flops\n");
    CHECK(fs::exists("tmp_test_cli/run/manifest.json"));
    CHECK(fs::exists("tmp_test_cli/run/final.ckpt"));
    const std::string manifest = hadamix::oracle::read_file("tmp_test_cli/run/manifest.json");
    CHECK(contains(manifest, "\"command\": \"train\""));
    CHECK(contains(manifest, "\"d_model\": 16"));

    const CmdResult g = run_cli(
        "generate --ckpt tmp_test_cli/run/final.ckpt --prompt the --tokens 8");
    CHECK(g.code == 0);
    CHECK(g.out.size() >= 3);  // at least the echoed prompt

    const CmdResult e = run_cli(
        "export loss --log tmp_test_cli/run/train_log.csv --out tmp_test_cli/loss.csv");
    CHECK(e.code == 0);
    CHECK(hadamix::oracle::read_file("tmp_test_cli/loss.csv") ==
          "step,train_loss,val_loss\n");
}

TEST_CASE("error paths map to distinct exit codes") {
    CHECK(run_cli("train --data tmp_test_cli/absent.txt --steps 0 --d 16 --layers 1 "
                  "--heads 2 --seq-len 16 --warmup 0 --out tmp_test_cli/x")
              .code == 4);
    CHECK(run_cli("train --data tmp_test_cli/c.txt --steps 0 --d 20 --layers 1 "
                  "--heads 2 --seq-len 16 --warmup 0 --out tmp_test_cli/x")
              .code == 3);
    CHECK(run_cli("generate --ckpt tmp_test_cli/absent.ckpt").code == 4);
    CHECK(run_cli("bench prefill --d 512 --layers 8 --len 64 --variant dense --runs 2 "
                  "--iters 1 --warmup 0 --mem-limit-mb 1")
              .code == 5);
}

TEST_CASE("export flops emits the published-figure columns") {
    const CmdResult r = run_cli("export flops --out tmp_test_cli/flops.csv");
    CHECK(r.code == 0);
    const std::string csv = hadamix::oracle::read_file("tmp_test_cli/flops.csv");
    CHECK(contains(csv, "d,dense_flops,fwht_flops\n"));
    CHECK(contains(csv, "64,4096,384.000"));
    CHECK(contains(csv, "256,65536,2048.000"));
    CHECK(contains(csv, "768,589824,7361.251"));
    CHECK(contains(csv, "1024,1048576,10240.000"));
}

TEST_CASE("bench prefill writes the report table") {
    const CmdResult r = run_cli(
        "bench prefill --d 64 --layers 1 --heads 1 --len 8 --batch 1 --runs 2 --iters 2 "
        "--warmup 1 --variant both --out tmp_test_cli/bench.csv");
    CHECK(r.code == 0);
    const std::string csv = hadamix::oracle::read_file("tmp_test_cli/bench.csv");
    CHECK(contains(csv, "size,variant,lat_mean,lat_std,tps_mean,tps_std,mem_bytes,"
                        "delta_lat_mean,delta_tps_mean,delta_mem_bytes"));
    CHECK(contains(csv, "64,dense,"));
    CHECK(contains(csv, "64,hadamard,"));
    CHECK(contains(r.out, "delta (hadamard - baseline)"));
}

TEST_CASE("environment variable supplies the default output directory") {
    fs::remove_all("tmp_test_cli/envrun");
    const CmdResult t = run_cli(
        "train --data tmp_test_cli/c.txt --steps 0 --warmup 0 --d 16 --layers 1 "
        "--heads 2 --seq-len 16",
        "HADAMIX_OUT=tmp_test_cli/envrun");
    CHECK(t.code == 0);
    CHECK(fs::exists("tmp_test_cli/envrun/train_log.csv"));
}

TEST_CASE("selftest reports per-suite pass counts") {
    const CmdResult r = run_cli("selftest");
    CHECK(r.code == 0);
    CHECK(contains(r.out, "wht:"));
    CHECK(contains(r.out, "gradients:"));
    CHECK(contains(r.out, "passed"));
}
