#include "orthograd/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "orthograd/diagnostics.hpp"
#include "orthograd/rng.hpp"

namespace orthograd
{

using nlohmann::json;

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

std::string RunConfig::transform_name() const
{
    return transform ? std::string(to_string(*transform)) : "none";
}

std::string RunConfig::run_id() const
{
    if (!name.empty())
    {
        return name;
    }
    std::string id = model + "-" + std::string(to_string(optimiser)) + "-" + transform_name();
    return skip_dense ? id + "-skipdense" : id;
}

void RunConfig::validate() const
{
    hp.validate();
    const ModelSpec spec = model_by_name(model);
    auto require = [](bool ok, const std::string& what) {
        if (!ok)
            throw ConfigError("invalid config: " + what);
    };
    require(batch_size >= 1, "batch_size must be >= 1");
    require(eval_batch_size >= 1, "eval_batch_size must be >= 1");
    require(epochs >= 0, "epochs must be >= 0");
    require(!seeds.empty(), "at least one seed is required");
    require(precision == "float32" || precision == "float64", "precision must be float32 or float64");
    require(lr_step_every >= 0, "lr_step_every must be >= 0");
    require(lr_step_gamma > 0.0, "lr_step_gamma must be > 0");
    require(train_subset >= 0, "train_subset must be >= 0");
    if (data == "synthetic")
    {
        require(synthetic_classes >= 2, "synthetic classes must be >= 2");
        require(synthetic_train_per_class >= 1 && synthetic_test_per_class >= 1,
                "synthetic sample counts must be >= 1");
        require(synthetic_classes <= spec.output_shape()[0],
                "synthetic classes exceed the model's " + std::to_string(spec.output_shape()[0]) + " outputs");
    }
    for (const char ch : run_id())
    {
        require(ch != ',' && ch != '\n', "run name must not contain commas or newlines");
    }
}

json RunConfig::to_json() const
{
    return json{
        {"name", name},
        {"model", model},
        {"data", data},
        {"train_subset", train_subset},
        {"synthetic",
         {{"classes", synthetic_classes},
          {"train_per_class", synthetic_train_per_class},
          {"test_per_class", synthetic_test_per_class},
          {"separation", synthetic_separation},
          {"seed", synthetic_seed}}},
        {"optimiser", std::string(to_string(optimiser))},
        {"transform", transform_name()},
        {"skip_dense", skip_dense},
        {"lr", hp.lr},
        {"momentum", hp.momentum},
        {"weight_decay", hp.weight_decay},
        {"beta1", hp.beta1},
        {"beta2", hp.beta2},
        {"eps", hp.eps},
        {"lars_trust", hp.lars_trust},
        {"decay_before_transform", hp.decay_before_transform},
        {"batch_size", batch_size},
        {"eval_batch_size", eval_batch_size},
        {"epochs", epochs},
        {"lr_step_every", lr_step_every},
        {"lr_step_gamma", lr_step_gamma},
        {"seeds", seeds},
        {"out", out_dir},
        {"precision", precision},
    };
}

RunConfig RunConfig::from_json(const json& j)
{
    if (!j.is_object())
    {
        throw ConfigError("config must be a JSON object");
    }
    RunConfig c;
    try
    {
        c.name         = j.value("name", c.name);
        c.model        = j.value("model", c.model);
        c.data         = j.value("data", c.data);
        c.train_subset = j.value("train_subset", c.train_subset);
        if (j.contains("synthetic"))
        {
            const json& s               = j.at("synthetic");
            c.synthetic_classes         = s.value("classes", c.synthetic_classes);
            c.synthetic_train_per_class = s.value("train_per_class", c.synthetic_train_per_class);
            c.synthetic_test_per_class  = s.value("test_per_class", c.synthetic_test_per_class);
            c.synthetic_separation      = s.value("separation", c.synthetic_separation);
            c.synthetic_seed            = s.value("seed", c.synthetic_seed);
        }
        c.optimiser = parse_optimizer(j.value("optimiser", std::string(to_string(c.optimiser))));
        const std::string t = j.value("transform", c.transform_name());
        c.transform  = t == "none" ? std::nullopt : std::optional(parse_transform(t));
        c.skip_dense = j.value("skip_dense", c.skip_dense);
        c.hp.lr           = j.value("lr", c.hp.lr);
        c.hp.momentum     = j.value("momentum", c.hp.momentum);
        c.hp.weight_decay = j.value("weight_decay", c.hp.weight_decay);
        c.hp.beta1        = j.value("beta1", c.hp.beta1);
        c.hp.beta2        = j.value("beta2", c.hp.beta2);
        c.hp.eps          = j.value("eps", c.hp.eps);
        c.hp.lars_trust   = j.value("lars_trust", c.hp.lars_trust);
        c.hp.decay_before_transform = j.value("decay_before_transform", c.hp.decay_before_transform);
        c.batch_size      = j.value("batch_size", c.batch_size);
        c.eval_batch_size = j.value("eval_batch_size", c.eval_batch_size);
        c.epochs          = j.value("epochs", c.epochs);
        c.lr_step_every   = j.value("lr_step_every", c.lr_step_every);
        c.lr_step_gamma   = j.value("lr_step_gamma", c.lr_step_gamma);
        c.seeds           = j.value("seeds", c.seeds);
        c.out_dir         = j.value("out", c.out_dir);
        c.precision       = j.value("precision", c.precision);
    }
    catch (const json::exception& e)
    {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return c;
}

RunConfig load_config(const std::string& path)
{
    std::ifstream is(path);
    if (!is)
    {
        throw ConfigError("cannot open config '" + path + "'");
    }
    // A metrics CSV works as a config: its header carries the full run config.
    if (is.peek() == '#')
    {
        std::string line;
        while (std::getline(is, line) && line.starts_with("#"))
        {
            if (line.starts_with("# config: "))
            {
                return RunConfig::from_json(json::parse(line.substr(10)));
            }
        }
        throw ConfigError("'" + path + "' has no config header line");
    }
    try
    {
        return RunConfig::from_json(json::parse(is));
    }
    catch (const json::parse_error& e)
    {
        throw ConfigError("config '" + path + "': " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Data
// ---------------------------------------------------------------------------

namespace
{
std::string fmt(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

std::string stats_str(const ChannelStats& s)
{
    std::string out = "mean=[";
    for (std::size_t i = 0; i < s.mean.size(); ++i)
        out += (i ? " " : "") + fmt(s.mean[i]);
    out += "] std=[";
    for (std::size_t i = 0; i < s.std.size(); ++i)
        out += (i ? " " : "") + fmt(s.std[i]);
    return out + "]";
}
} // namespace

LoadedData load_data(const RunConfig& c)
{
    LoadedData d;
    if (c.data == "synthetic")
    {
        const Shape shape = model_by_name(c.model).input;
        d.train = synthetic_gaussian_classes(c.synthetic_classes, c.synthetic_train_per_class,
                                             c.synthetic_seed, c.synthetic_separation, 0, shape);
        d.test  = synthetic_gaussian_classes(c.synthetic_classes, c.synthetic_test_per_class,
                                             c.synthetic_seed, c.synthetic_separation, 1, shape);
        const ChannelStats stats = channel_stats(d.train.images, d.train.image_shape);
        standardise(d.train, stats);
        standardise(d.test, stats);
        d.description = "synthetic gaussian classes: classes=" + std::to_string(c.synthetic_classes) +
                        " train=" + std::to_string(d.train.size()) + " test=" + std::to_string(d.test.size()) +
                        " separation=" + fmt(c.synthetic_separation) +
                        " seed=" + std::to_string(c.synthetic_seed);
    }
    else
    {
        Cifar10 cifar = load_cifar10(c.data, c.train_subset);
        d.train       = std::move(cifar.train);
        d.test        = std::move(cifar.test);
        d.description = "cifar10 dir=" + c.data + " train=" + std::to_string(d.train.size()) +
                        " test=" + std::to_string(d.test.size()) +
                        "; the test split serves as both per-epoch validation and final test" +
                        "; no augmentation";
    }
    return d;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

namespace
{

struct EvalResult
{
    double loss     = 0.0;
    double accuracy = 0.0;
};

template <typename Scalar>
EvalResult evaluate(Model<Scalar>& model, const Dataset& d, Index batch_size)
{
    double loss_sum = 0.0;
    Index correct   = 0;
    for (const auto& idx : sequential_batches(d.size(), batch_size))
    {
        const auto fr           = model.forward(d.gather<Scalar>(idx), Mode::Eval);
        const std::vector<int> y = d.gather_labels(idx);
        const LossResult r      = softmax_cross_entropy<Scalar>(fr.logits, y, nullptr);
        loss_sum += r.loss * static_cast<double>(idx.size());
        correct += r.correct;
    }
    const auto n = static_cast<double>(d.size());
    return {loss_sum / n, 100.0 * static_cast<double>(correct) / n};
}

template <typename Scalar>
SeedResult train_seed_impl(const RunConfig& cfg, const LoadedData& data, std::uint64_t seed)
{
    using Clock = std::chrono::steady_clock;

    SeedResult result;
    result.seed = seed;
    Model<Scalar> model(model_by_name(cfg.model));
    model.init_params(seed);

    std::vector<OptimizerState<Scalar>> states;
    for (const auto& p : model.params())
    {
        states.push_back(make_state<Scalar>(cfg.optimiser, p.size()));
    }
    const GradTransform transform{cfg.transform.value_or(TransformKind::Identity), cfg.skip_dense};
    const BatchPlan plan{seed, cfg.batch_size};

    std::vector<std::size_t> probe;
    for (Index i = 0; i < std::min(cfg.eval_batch_size, data.test.size()); ++i)
    {
        probe.push_back(static_cast<std::size_t>(i));
    }
    const Tensor<Scalar> probe_x = data.test.gather<Scalar>(probe);

    double svd_total = 0.0;
    const std::string run_id = cfg.run_id();

    auto diverge = [&](Index epoch, const std::string& why) {
        result.diverged          = true;
        result.divergence_reason = why;
        MetricsRecord r;
        r.run_id   = run_id;
        r.seed     = seed;
        r.epoch    = epoch;
        r.split    = "diverged";
        r.loss     = std::numeric_limits<double>::quiet_NaN();
        r.r_mean.assign(result.layer_names.size(), std::nullopt);
        r.svd_time_s = svd_total;
        result.records.push_back(std::move(r));
    };

    {
        const auto fr = model.forward(probe_x, Mode::Eval, true);
        for (const auto& a : fr.activations)
        {
            result.layer_names.push_back(a.name);
        }
    }

    for (Index epoch = 1; epoch <= cfg.epochs; ++epoch)
    {
        HyperParams hp = cfg.hp;
        if (cfg.lr_step_every > 0)
        {
            hp.lr *= std::pow(cfg.lr_step_gamma, static_cast<double>((epoch - 1) / cfg.lr_step_every));
        }

        const auto t0   = Clock::now();
        double loss_sum = 0.0;
        Index correct   = 0;
        Index dead      = 0;
        const auto plan_batches = batches(data.train.size(), plan, epoch - 1);
        try
        {
            for (std::size_t bi = 0; bi < plan_batches.size(); ++bi)
            {
                const auto& idx          = plan_batches[bi];
                const std::vector<int> y = data.train.gather_labels(idx);
                model.forward(data.train.gather<Scalar>(idx), Mode::Train);
                const LossResult lr = model.backward(y);
                if (!std::isfinite(lr.loss))
                {
                    diverge(epoch, "non-finite training loss");
                    return result;
                }
                loss_sum += lr.loss * static_cast<double>(idx.size());
                correct += lr.correct;
                if (bi + 1 == plan_batches.size())
                {
                    dead = dead_parameters(model.params()).total_dead;
                }
                if (cfg.transform)
                {
                    svd_total += step_all(model.params(), transform, cfg.optimiser, states, hp).svd_seconds;
                }
                else
                {
                    step_all_plain(model.params(), cfg.optimiser, states, hp);
                }
            }
        }
        catch (const NonFiniteUpdate& e)
        {
            diverge(epoch, e.what());
            return result;
        }
        const double wall = std::chrono::duration<double>(Clock::now() - t0).count();

        std::vector<std::optional<double>> r_mean;
        {
            const auto fr = model.forward(probe_x, Mode::Eval, true);
            for (const auto& a : fr.activations)
            {
                const CosineStats s = representation_cosines(a);
                r_mean.push_back(s.empty ? std::nullopt : std::optional(s.mean));
            }
        }
        const EvalResult test = evaluate(model, data.test, cfg.eval_batch_size);
        if (!std::isfinite(test.loss))
        {
            diverge(epoch, "non-finite test loss");
            return result;
        }

        const auto n = static_cast<double>(data.train.size());
        result.records.push_back({run_id, seed, epoch, "train", loss_sum / n,
                                  100.0 * static_cast<double>(correct) / n, r_mean, dead, wall, svd_total});
        result.records.push_back(
            {run_id, seed, epoch, "test", test.loss, test.accuracy, r_mean, dead, wall, svd_total});
    }
    return result;
}

} // namespace

SeedResult train_seed(const RunConfig& config, const LoadedData& data, std::uint64_t seed)
{
    config.validate();
    if (config.precision == "float64")
    {
        return train_seed_impl<double>(config, data, seed);
    }
    return train_seed_impl<float>(config, data, seed);
}

// ---------------------------------------------------------------------------
// Metrics files
// ---------------------------------------------------------------------------

std::vector<std::string> metrics_columns(const std::vector<std::string>& layer_names)
{
    std::vector<std::string> cols{"run_id", "seed", "epoch", "split", "loss", "accuracy"};
    for (const auto& n : layer_names)
    {
        cols.push_back("r_mean_" + n);
    }
    cols.insert(cols.end(), {"dead_params", "epoch_wall_s", "svd_time_s"});
    return cols;
}

void write_metrics_csv(const std::string& path, const RunConfig& config, const LoadedData& data,
                       const SeedResult& result)
{
    std::ofstream os(path);
    if (!os)
    {
        throw ConfigError("cannot write metrics file '" + path + "'");
    }
    RunConfig single = config;
    single.seeds     = {result.seed};

    const std::time_t now = std::time(nullptr);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));

    os << "# orthograd metrics\n";
    os << "# artifact_version: " << ORTHOGRAD_VERSION << "\n";
    os << "# created: " << stamp << "\n";
    os << "# prng: " << Rng::algorithm << "\n";
    os << "# seed: " << result.seed << "\n";
    os << "# precision: " << config.precision << "\n";
    os << "# data: " << data.description << "\n";
    os << "# standardisation: " << stats_str(data.train.stats) << "\n";
    if (result.diverged)
    {
        os << "# status: diverged (" << result.divergence_reason << ")\n";
    }
    os << "# config: " << single.to_json().dump() << "\n";

    const auto cols = metrics_columns(result.layer_names);
    for (std::size_t i = 0; i < cols.size(); ++i)
    {
        os << (i ? "," : "") << cols[i];
    }
    os << "\n";
    for (const MetricsRecord& r : result.records)
    {
        os << r.run_id << ',' << r.seed << ',' << r.epoch << ',' << r.split << ',' << fmt(r.loss) << ','
           << fmt(r.accuracy);
        for (const auto& v : r.r_mean)
        {
            os << ',' << (v ? fmt(*v) : "");
        }
        os << ',' << r.dead_params << ',' << fmt(r.epoch_wall_s) << ',' << fmt(r.svd_time_s) << "\n";
    }
}

MetricsFile read_metrics_csv(const std::string& path)
{
    std::ifstream is(path);
    if (!is)
    {
        throw ConfigError("cannot open metrics file '" + path + "'");
    }
    MetricsFile f;
    std::string line;
    while (std::getline(is, line))
    {
        if (line.starts_with("#"))
        {
            const std::string h = line.size() > 2 ? line.substr(2) : "";
            f.header_lines.push_back(h);
            if (h.starts_with("config: "))
            {
                f.config = json::parse(h.substr(8));
            }
            continue;
        }
        f.body += line + "\n";
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ','))
        {
            fields.push_back(field);
        }
        if (!line.empty() && line.back() == ',')
        {
            fields.emplace_back();
        }
        if (f.columns.empty())
        {
            f.columns = std::move(fields);
        }
        else
        {
            f.rows.push_back(std::move(fields));
        }
    }
    if (f.columns.empty())
    {
        throw ConfigError("metrics file '" + path + "' has no column header");
    }
    return f;
}

std::string deterministic_body(const MetricsFile& file)
{
    std::vector<std::size_t> blank;
    for (std::size_t i = 0; i < file.columns.size(); ++i)
    {
        if (file.columns[i] == "epoch_wall_s" || file.columns[i] == "svd_time_s")
            blank.push_back(i);
    }
    std::string out;
    for (std::size_t i = 0; i < file.columns.size(); ++i)
    {
        out += (i ? "," : "") + file.columns[i];
    }
    out += "\n";
    for (const auto& row : file.rows)
    {
        for (std::size_t i = 0; i < row.size(); ++i)
        {
            const bool hide = std::find(blank.begin(), blank.end(), i) != blank.end();
            out += (i ? "," : "") + (hide ? std::string() : row[i]);
        }
        out += "\n";
    }
    return out;
}

ExperimentResult run_experiment(const RunConfig& config)
{
    config.validate();
    return run_experiment(config, load_data(config));
}

ExperimentResult run_experiment(const RunConfig& config, const LoadedData& data)
{
    config.validate();
    std::filesystem::create_directories(config.out_dir);
    ExperimentResult out;
    for (const std::uint64_t seed : config.seeds)
    {
        SeedResult r = train_seed(config, data, seed);
        r.csv_path   = (std::filesystem::path(config.out_dir) / ("metrics_seed" + std::to_string(seed) + ".csv")).string();
        write_metrics_csv(r.csv_path, config, data, r);
        out.seeds.push_back(std::move(r));
    }
    out.summary_path = write_summary(config.out_dir, summarise(config.out_dir));
    return out;
}

} // namespace orthograd
