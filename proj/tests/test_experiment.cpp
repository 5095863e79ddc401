#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "orthograd/experiment.hpp"

using namespace orthograd;
namespace fs = std::filesystem;

namespace
{

struct TempDir
{
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name)
    {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

RunConfig tiny_config(const fs::path& out)
{
    RunConfig c;
    c.synthetic_train_per_class = 4;
    c.synthetic_test_per_class  = 2;
    c.synthetic_separation      = 1.0;
    c.batch_size                = 8;
    c.eval_batch_size           = 10;
    c.epochs                    = 2;
    c.seeds                     = {0};
    c.out_dir                   = out.string();
    return c;
}

// A metrics file whose final test row has the given accuracy.
void fake_run(const RunConfig& cfg, std::uint64_t seed, double acc, bool diverged = false)
{
    SeedResult r;
    r.seed        = seed;
    r.layer_names = {"conv1"};
    MetricsRecord test{cfg.run_id(), seed, 1, "test", 1.0 - acc / 100.0, acc, {0.2}, 0, 0.1, 0.0};
    r.records.push_back(test);
    if (diverged)
    {
        r.diverged = true;
        r.records.push_back({cfg.run_id(), seed, 2, "diverged", 0.0, 0.0, {std::nullopt}, 0, 0.0, 0.0});
    }
    LoadedData data;
    data.description = "fake";
    write_metrics_csv((fs::path(cfg.out_dir) / ("metrics_seed" + std::to_string(seed) + ".csv")).string(), cfg,
                      data, r);
}

} // namespace

TEST_CASE("default configuration")
{
    const RunConfig c;
    CHECK(c.batch_size == 1024);
    CHECK(c.hp.lr == 1e-2);
    CHECK(c.hp.momentum == 0.9);
    CHECK(c.hp.weight_decay == 5e-4);
    CHECK(c.epochs == 100);
    CHECK(c.model == "basic_cnn");
    CHECK_NOTHROW(c.validate());
}

TEST_CASE("configuration validation")
{
    RunConfig c;
    c.batch_size = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.precision = "float16";
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.synthetic_classes = 11;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.name = "a,b";
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.hp.lr = -1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("config json round trip")
{
    RunConfig c;
    c.optimiser  = OptimizerKind::Lars;
    c.transform  = TransformKind::NormaliseColumns;
    c.skip_dense = true;
    c.hp.lr      = 0.25;
    c.seeds      = {3, 5};
    c.precision  = "float64";
    const RunConfig back = RunConfig::from_json(c.to_json());
    CHECK(back.to_json() == c.to_json());
    CHECK(back.run_id() == c.run_id());

    c.transform = std::nullopt;
    CHECK(RunConfig::from_json(c.to_json()).transform == std::nullopt);
    CHECK(RunConfig::from_json(nlohmann::json::object()).to_json() == RunConfig{}.to_json());
}

TEST_CASE("mean and standard error")
{
    const auto [m, se] = mean_and_standard_error({70, 71, 72, 73, 74});
    CHECK(m == doctest::Approx(72.0));
    REQUIRE(se);
    CHECK(*se == doctest::Approx(std::sqrt(2.5) / std::sqrt(5.0)));
    CHECK(format_mean_se(m, se) == "72.00 ± 0.71");

    const auto [m1, se1] = mean_and_standard_error({65.5});
    CHECK(m1 == 65.5);
    CHECK_FALSE(se1);
    CHECK(format_mean_se(m1, se1) == "65.50");
}

TEST_CASE("summarise over seeds")
{
    TempDir dir("orthograd_summarise");
    RunConfig cfg = tiny_config(dir.path);
    const double accs[] = {70, 71, 72, 73, 74};
    for (std::uint64_t s = 0; s < 5; ++s)
        fake_run(cfg, s, accs[s]);
    const SummaryRow row = summarise(dir.path.string());
    CHECK(row.runs == 5);
    CHECK(row.diverged == 0);
    CHECK(format_mean_se(row.acc_mean, row.acc_se) == "72.00 ± 0.71");
    const std::string path = write_summary(dir.path.string(), row);
    CHECK(fs::exists(path));

    fake_run(cfg, 5, 10.0, true);
    const SummaryRow with_div = summarise(dir.path.string());
    CHECK(with_div.runs == 5);
    CHECK(with_div.diverged == 1);
    CHECK(with_div.acc_mean == doctest::Approx(72.0));
}

TEST_CASE("summarise refuses mixed configurations")
{
    TempDir dir("orthograd_summarise_mixed");
    RunConfig a = tiny_config(dir.path);
    RunConfig b = a;
    b.hp.lr     = 0.5;
    fake_run(a, 0, 50.0);
    fake_run(b, 1, 60.0);
    CHECK_THROWS_AS(summarise(dir.path.string()), ConfigError);
    TempDir empty("orthograd_summarise_empty");
    CHECK_THROWS_AS(summarise(empty.path.string()), ConfigError);
}

TEST_CASE("a small training run writes complete metrics and can be re-launched")
{
    TempDir dir("orthograd_train");
    RunConfig cfg = tiny_config(dir.path / "a");
    cfg.transform = TransformKind::Orthogonalise;
    const ExperimentResult res = run_experiment(cfg);
    REQUIRE(res.seeds.size() == 1);
    CHECK_FALSE(res.seeds[0].diverged);
    CHECK(res.seeds[0].layer_names == std::vector<std::string>{"conv1", "conv2", "conv3"});
    CHECK(fs::exists(res.summary_path));

    const MetricsFile f = read_metrics_csv(res.seeds[0].csv_path);
    std::vector<std::string> keys;
    for (const auto& h : f.header_lines)
        keys.push_back(h.substr(0, h.find(':')));
    for (const char* k : {"artifact_version", "created", "prng", "seed", "precision", "data", "standardisation", "config"})
        CHECK(std::find(keys.begin(), keys.end(), k) != keys.end());
    CHECK(f.columns == std::vector<std::string>{"run_id", "seed", "epoch", "split", "loss", "accuracy",
                                                "r_mean_conv1", "r_mean_conv2", "r_mean_conv3",
                                                "dead_params", "epoch_wall_s", "svd_time_s"});
    CHECK(f.rows.size() == 4); // train and test per epoch
    CHECK(f.rows.back()[3] == "test");
    CHECK(std::stod(f.rows.back()[11]) > 0.0);

    // re-launch from the CSV alone into another directory
    RunConfig again = load_config(res.seeds[0].csv_path);
    CHECK(again.to_json() == cfg.to_json());
    again.out_dir = (dir.path / "b").string();
    const ExperimentResult res2 = run_experiment(again);
    CHECK(deterministic_body(read_metrics_csv(res2.seeds[0].csv_path)) == deterministic_body(f));
}

TEST_CASE("plain SGDM does no SVD work")
{
    TempDir dir("orthograd_train_plain");
    RunConfig cfg = tiny_config(dir.path);
    cfg.transform = std::nullopt;
    cfg.epochs    = 1;
    const ExperimentResult res = run_experiment(cfg);
    CHECK(res.seeds[0].records.back().svd_time_s == 0.0);
}

TEST_CASE("a diverging seed is recorded and the others still run")
{
    TempDir dir("orthograd_diverge");
    RunConfig cfg = tiny_config(dir.path);
    cfg.hp.lr     = 1e30;
    cfg.seeds     = {0, 1};
    const ExperimentResult res = run_experiment(cfg);
    REQUIRE(res.seeds.size() == 2);
    CHECK(res.seeds[0].diverged);
    CHECK(res.seeds[1].diverged);
    CHECK(res.seeds[0].records.back().split == "diverged");
    const SummaryRow row = summarise(dir.path.string());
    CHECK(row.diverged == 2);
    CHECK(row.runs == 0);
}
