// End-to-end tests driving the installed CLI binary. The binary path comes
// from the SPECPRUNE_BIN environment variable (set by ctest).

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "specprune/allocation.hpp"
#include "specprune/metrics.hpp"
#include "specprune/tensorio.hpp"
#include "toy_model.hpp"

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <sys/wait.h>
#include <fstream>
#include <sstream>
#include <string>

using namespace specprune;
namespace fs = std::filesystem;

namespace {

std::string bin() {
    const char * path = std::getenv("SPECPRUNE_BIN");
    REQUIRE_MESSAGE(path != nullptr, "SPECPRUNE_BIN must point at the CLI binary");
    return path;
}

int run(const std::string & args, std::string * out = nullptr) {
    const std::string cmd = bin() + " " + args + " > /tmp/specprune_cli_out.txt 2>&1";
    const int status = std::system(cmd.c_str());
    if (out != nullptr) {
        std::ifstream in("/tmp/specprune_cli_out.txt");
        std::ostringstream ss;
        ss << in.rdbuf();
        *out = ss.str();
    }
    return WEXITSTATUS(status);
}

std::string slurp(const fs::path & path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct Workspace {
    fs::path dir;
    fs::path ckpt;

    Workspace() {
        static int counter = 0;
        dir = fs::temp_directory_path() / ("specprune_cli_" + std::to_string(counter++));
        fs::create_directories(dir);
        testsupport::ToyModelConfig cfg;
        cfg.blocks = 2;
        cfg.dim = 32;
        cfg.hidden = 48;
        cfg.vocab = 40;
        ckpt = dir / "toy.safetensors";
        save_checkpoint(testsupport::make_random_init(cfg), ckpt, Format::safetensors);
    }
};

} // namespace

TEST_SUITE("cli") {

TEST_CASE("analyze writes one report row per grouped matrix and reruns byte-identically") {
    Workspace ws;
    const std::string args = "analyze --model " + ws.ckpt.string() +
                             " --format safetensors --grouping llama --metric alpha_hill --out " +
                             (ws.dir / "m1").string();
    REQUIRE(run(args) == 0);
    const auto doc = nlohmann::json::parse(slurp(ws.dir / "m1" / "metrics.json"));
    CHECK(doc["rows"].size() == 14); // 2 blocks x 7 matrices
    CHECK(doc["metric"] == "alpha_hill");

    // a threaded rerun must produce the identical report
    const std::string args2 = "analyze --model " + ws.ckpt.string() +
                              " --format safetensors --grouping llama --metric alpha_hill --threads 2 --out " +
                              (ws.dir / "m2").string();
    REQUIRE(run(args2) == 0);
    CHECK(slurp(ws.dir / "m1" / "metrics.json") == slurp(ws.dir / "m2" / "metrics.json"));
    CHECK(slurp(ws.dir / "m1" / "metrics.csv") == slurp(ws.dir / "m2" / "metrics.csv"));

    // alpha values land in a sane band for a random-init model
    for (const auto & row : doc["rows"]) {
        const double alpha = row["alpha_hill"].get<double>();
        CHECK(alpha >= 1.0);
        CHECK(alpha <= 20.0);
    }
}

TEST_CASE("allocate with tau = 0 emits the uniform plan") {
    Workspace ws;
    REQUIRE(run("analyze --model " + ws.ckpt.string() + " --out " + (ws.dir / "m").string()) == 0);
    REQUIRE(run("allocate --metrics " + (ws.dir / "m" / "metrics.json").string() +
                " --sparsity 0.6 --tau 0 --granularity per_block --out " +
                (ws.dir / "plan.json").string()) == 0);
    const auto plan = nlohmann::json::parse(slurp(ws.dir / "plan.json"));
    for (const auto & [name, s] : plan["per_matrix"].items()) {
        CHECK(s.get<double>() == 0.6);
    }
    CHECK(plan["granularity"] == "per_block");
    CHECK(plan["tau"] == 0.0);
}

TEST_CASE("allocate matches the library-level allocation (thin-wrapper law)") {
    Workspace ws;
    REQUIRE(run("analyze --model " + ws.ckpt.string() + " --out " + (ws.dir / "m").string()) == 0);
    REQUIRE(run("allocate --metrics " + (ws.dir / "m" / "metrics.json").string() +
                " --sparsity 0.7 --tau 0.2 --granularity per_block --out " +
                (ws.dir / "plan.json").string()) == 0);

    // library route
    using namespace specprune;
    const WeightStore store = load_checkpoint(ws.ckpt, Format::safetensors);
    const BlockGrouping grouping = group_blocks(store, llama_grouping_preset());
    const ModelAnalysis analysis = analyze_model(store, grouping, MetricName::alpha_hill);
    const std::vector<BlockUnits> blocks = build_block_units(analysis, MetricName::alpha_hill);
    std::vector<double> q, d;
    for (const auto & b : blocks) {
        double total = 0.0;
        for (const auto & u : b.members) {
            total += u.d;
        }
        q.push_back(b.block_q);
        d.push_back(total);
    }
    const BlockAllocation alloc = allocate_sparsity_tau(q, d, 0.7, 0.2);
    const SparsityPlan lib_plan = expand_to_units(alloc, blocks, 0.7);

    const SparsityPlan cli_plan = sparsity_plan_from_json(slurp(ws.dir / "plan.json"));
    REQUIRE(cli_plan.per_matrix.size() == lib_plan.per_matrix.size());
    for (std::size_t i = 0; i < lib_plan.per_matrix.size(); ++i) {
        CHECK(cli_plan.per_matrix[i].first == lib_plan.per_matrix[i].first);
        CHECK(cli_plan.per_matrix[i].second == lib_plan.per_matrix[i].second);
    }
}

TEST_CASE("prune reports the achieved sparsity and is idempotent") {
    Workspace ws;
    REQUIRE(run("analyze --model " + ws.ckpt.string() + " --out " + (ws.dir / "m").string()) == 0);
    REQUIRE(run("allocate --metrics " + (ws.dir / "m" / "metrics.json").string() +
                " --sparsity 0.5 --tau 0.2 --granularity per_block --out " +
                (ws.dir / "plan.json").string()) == 0);
    std::string out;
    REQUIRE(run("prune --model " + ws.ckpt.string() + " --plan " + (ws.dir / "plan.json").string() +
                " --out " + (ws.dir / "pruned.safetensors").string(),
                &out) == 0);
    CHECK(out.find("global achieved sparsity:") != std::string::npos);

    const auto report = nlohmann::json::parse(slurp(ws.dir / "pruned.safetensors.report.json"));
    CHECK(std::abs(report["global_achieved_sparsity"].get<double>() - 0.5) < 0.01);

    // pruning the pruned checkpoint with the same plan changes nothing
    REQUIRE(run("prune --model " + (ws.dir / "pruned.safetensors").string() + " --plan " +
                (ws.dir / "plan.json").string() + " --out " + (ws.dir / "pruned2.safetensors").string()) ==
            0);
    CHECK(slurp(ws.dir / "pruned.safetensors") == slurp(ws.dir / "pruned2.safetensors"));

    // prune -> analyze: post-prune alphas are reportable
    REQUIRE(run("analyze --model " + (ws.dir / "pruned.safetensors").string() + " --out " +
                (ws.dir / "post").string()) == 0);
    const auto post = nlohmann::json::parse(slurp(ws.dir / "post" / "metrics.json"));
    CHECK(post["rows"].size() == 14);
    CHECK(post["failures"].empty());
}

TEST_CASE("budget plan kinds flow through allocate and prune") {
    Workspace ws;
    REQUIRE(run("analyze --model " + ws.ckpt.string() + " --out " + (ws.dir / "m").string()) == 0);

    REQUIRE(run("allocate --metrics " + (ws.dir / "m" / "metrics.json").string() +
                " --kind nm --m-group 8 --density 0.5 --out " + (ws.dir / "nm.json").string()) == 0);
    const auto nm = nlohmann::json::parse(slurp(ws.dir / "nm.json"));
    CHECK(nm["kind"] == "nm");
    REQUIRE(run("prune --model " + ws.ckpt.string() + " --plan " + (ws.dir / "nm.json").string() +
                " --out " + (ws.dir / "nm.safetensors").string()) == 0);

    REQUIRE(run("allocate --metrics " + (ws.dir / "m" / "metrics.json").string() +
                " --kind bits --bit-options 2,4,8 --avg-bits 4 --out " +
                (ws.dir / "bits.json").string()) == 0);
    REQUIRE(run("prune --model " + ws.ckpt.string() + " --plan " + (ws.dir / "bits.json").string() +
                " --out " + (ws.dir / "quant.safetensors").string()) == 0);

    REQUIRE(run("allocate --metrics " + (ws.dir / "m" / "metrics.json").string() +
                " --kind ranks --keep-budget 200 --strategy more_on_ht --out " +
                (ws.dir / "ranks.json").string()) == 0);
    REQUIRE(run("prune --model " + ws.ckpt.string() + " --plan " + (ws.dir / "ranks.json").string() +
                " --out " + (ws.dir / "lra.safetensors").string()) == 0);
}

TEST_CASE("synth correlation emits the documented CSV schema deterministically") {
    Workspace ws;
    std::string out;
    REQUIRE(run("synth correlation --alphas 2.0,3.0 --n 2000 --seeds 2 --seed 5 --out " +
                (ws.dir / "c1.csv").string(),
                &out) == 0);
    CHECK(out.find("pearson r") != std::string::npos);
    const std::string csv = slurp(ws.dir / "c1.csv");
    CHECK(csv.rfind("alpha_true,seed,alpha_hill,stable_rank\n", 0) == 0);

    REQUIRE(run("synth correlation --alphas 2.0,3.0 --n 2000 --seeds 2 --seed 5 --out " +
                (ws.dir / "c2.csv").string()) == 0);
    CHECK(slurp(ws.dir / "c1.csv") == slurp(ws.dir / "c2.csv"));
}

TEST_CASE("synth lra runs both strategies on a checkpoint") {
    Workspace ws;
    std::string out;
    REQUIRE(run("synth lra --model " + ws.ckpt.string() + " --keep-budget 200 --out " +
                (ws.dir / "lra.csv").string(),
                &out) == 0);
    CHECK(out.find("more_on_ht") != std::string::npos);
    CHECK(out.find("less_on_ht") != std::string::npos);
    CHECK(slurp(ws.dir / "lra.csv").rfind("strategy,name,kept_rank\n", 0) == 0);
}

TEST_CASE("exit codes: 1 usage, 2 data, 3 infeasible") {
    Workspace ws;
    CHECK(run("bogus-subcommand") == 1);
    CHECK(run("analyze --model /nonexistent.safetensors --out /tmp/x") == 2);

    REQUIRE(run("analyze --model " + ws.ckpt.string() + " --out " + (ws.dir / "m").string()) == 0);
    // both tau and explicit endpoints: usage error
    CHECK(run("allocate --metrics " + (ws.dir / "m" / "metrics.json").string() +
              " --sparsity 0.5 --tau 0.2 --s1 0.8 --s2 1.2 --out " + (ws.dir / "p.json").string()) == 1);
    // min-sparsity above S: infeasible
    CHECK(run("allocate --metrics " + (ws.dir / "m" / "metrics.json").string() +
              " --sparsity 0.5 --min-sparsity 0.6 --out " + (ws.dir / "p.json").string()) == 3);
}

} // TEST_SUITE
