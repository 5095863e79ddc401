// orthograd: train and summarise gradient-orthogonalisation experiments.
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "orthograd/experiment.hpp"

using namespace orthograd;

namespace
{

std::vector<std::uint64_t> parse_seeds(const std::string& s)
{
    std::vector<std::uint64_t> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ','))
    {
        if (!tok.empty())
            out.push_back(std::stoull(tok));
    }
    if (out.empty())
        throw ConfigError("--seeds needs at least one seed");
    return out;
}

void print_summary_table(const std::vector<SummaryRow>& rows)
{
    std::printf("%-40s %5s %8s %16s %16s\n", "run", "runs", "diverged", "test loss", "test acc (%)");
    for (const SummaryRow& r : rows)
    {
        std::printf("%-40s %5ld %8ld %16s %16s\n", r.run_id.c_str(), static_cast<long>(r.runs),
                    static_cast<long>(r.diverged), format_mean_se(r.loss_mean, r.loss_se).c_str(),
                    format_mean_se(r.acc_mean, r.acc_se).c_str());
    }
}

bool has_metrics(const std::filesystem::path& dir)
{
    for (const auto& e : std::filesystem::directory_iterator(dir))
    {
        const std::string fn = e.path().filename().string();
        if (fn.starts_with("metrics_seed") && fn.ends_with(".csv"))
            return true;
    }
    return false;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Gradient orthogonalisation experiments"};
    app.require_subcommand(1);

    auto* train = app.add_subcommand("train", "Train one configuration over its seeds");
    std::string config_path;
    std::string optimiser, transform, seeds, data, out, precision, name, model;
    bool skip_dense = false;
    std::optional<Index> batch_size, epochs, train_subset;
    std::optional<double> lr, momentum, weight_decay;
    train->add_option("--config", config_path, "JSON config (or a metrics CSV to re-launch)");
    train->add_option("--optimiser,--optimizer", optimiser, "sgdm | adam | lars");
    train->add_option("--transform", transform, "identity | orth | norm | colnorm | none");
    train->add_flag("--skip-dense", skip_dense, "Do not orthogonalise dense layers");
    train->add_option("--batch-size", batch_size);
    train->add_option("--lr", lr);
    train->add_option("--momentum", momentum);
    train->add_option("--weight-decay", weight_decay);
    train->add_option("--epochs", epochs);
    train->add_option("--seeds", seeds, "Comma-separated seeds, e.g. 0,1,2");
    train->add_option("--data", data, "CIFAR-10 binary directory or 'synthetic'");
    train->add_option("--train-subset", train_subset, "Keep the first N training images");
    train->add_option("--out", out, "Output directory");
    train->add_option("--precision", precision, "float32 | float64");
    train->add_option("--name", name, "Run id written into the metrics");
    train->add_option("--model", model, "basic_cnn | linear_probe");

    auto* summ = app.add_subcommand("summarise", "Mean ± standard error of final test metrics");
    summ->alias("summarize");
    std::string in_dir;
    summ->add_option("--in", in_dir, "Run directory, or a directory of run directories")->required();

    CLI11_PARSE(app, argc, argv);

    try
    {
        if (*train)
        {
            RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
            if (!optimiser.empty())
                cfg.optimiser = parse_optimizer(optimiser);
            if (!transform.empty())
                cfg.transform = transform == "none" ? std::nullopt : std::optional(parse_transform(transform));
            if (skip_dense)
                cfg.skip_dense = true;
            if (batch_size)
                cfg.batch_size = *batch_size;
            if (lr)
                cfg.hp.lr = *lr;
            if (momentum)
                cfg.hp.momentum = *momentum;
            if (weight_decay)
                cfg.hp.weight_decay = *weight_decay;
            if (epochs)
                cfg.epochs = *epochs;
            if (!seeds.empty())
                cfg.seeds = parse_seeds(seeds);
            if (!data.empty())
                cfg.data = data;
            if (train_subset)
                cfg.train_subset = *train_subset;
            if (!out.empty())
                cfg.out_dir = out;
            if (!precision.empty())
                cfg.precision = precision;
            if (!name.empty())
                cfg.name = name;
            if (!model.empty())
                cfg.model = model;
            cfg.validate();

            std::cerr << "run " << cfg.run_id() << " -> " << cfg.out_dir << "\n";
            const ExperimentResult res = run_experiment(cfg);
            int diverged = 0;
            for (const SeedResult& s : res.seeds)
            {
                if (s.diverged)
                {
                    ++diverged;
                    std::cerr << "seed " << s.seed << " diverged: " << s.divergence_reason << "\n";
                }
                else if (!s.records.empty())
                {
                    const MetricsRecord& last = s.records.back();
                    std::cerr << "seed " << s.seed << ": test loss " << last.loss << ", accuracy "
                              << last.accuracy << "%, svd " << last.svd_time_s << " s\n";
                }
            }
            print_summary_table({summarise(cfg.out_dir)});
            return diverged == static_cast<int>(res.seeds.size()) && !res.seeds.empty() ? 2 : 0;
        }

        namespace fs = std::filesystem;
        if (!fs::is_directory(in_dir))
        {
            throw ConfigError("'" + in_dir + "' is not a directory");
        }
        std::vector<SummaryRow> rows;
        if (has_metrics(in_dir))
        {
            rows.push_back(summarise(in_dir));
            write_summary(in_dir, rows.back());
        }
        else
        {
            std::vector<fs::path> dirs;
            for (const auto& e : fs::directory_iterator(in_dir))
                if (e.is_directory() && has_metrics(e.path()))
                    dirs.push_back(e.path());
            std::sort(dirs.begin(), dirs.end());
            for (const auto& d : dirs)
            {
                rows.push_back(summarise(d.string()));
                write_summary(d.string(), rows.back());
            }
            if (rows.empty())
                throw ConfigError("no runs found under '" + in_dir + "'");
        }
        print_summary_table(rows);
        return 0;
    }
    catch (const std::exception& e)
    {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
