#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "orthograd/experiment.hpp"

namespace orthograd
{

std::pair<double, std::optional<double>> mean_and_standard_error(const std::vector<double>& xs)
{
    if (xs.empty())
    {
        return {std::numeric_limits<double>::quiet_NaN(), std::nullopt};
    }
    const auto n    = static_cast<double>(xs.size());
    double mean     = 0.0;
    for (double x : xs)
        mean += x;
    mean /= n;
    if (xs.size() < 2)
    {
        return {mean, std::nullopt};
    }
    double ss = 0.0;
    for (double x : xs)
        ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / (n - 1.0)) / std::sqrt(n)};
}

std::string format_mean_se(double mean, const std::optional<double>& se)
{
    char buf[64];
    if (se)
        std::snprintf(buf, sizeof buf, "%.2f ± %.2f", mean, *se);
    else
        std::snprintf(buf, sizeof buf, "%.2f", mean);
    return buf;
}

namespace
{

std::size_t column(const MetricsFile& f, const std::string& name)
{
    const auto it = std::find(f.columns.begin(), f.columns.end(), name);
    if (it == f.columns.end())
    {
        throw ConfigError("metrics file lacks column '" + name + "'");
    }
    return static_cast<std::size_t>(it - f.columns.begin());
}

nlohmann::json comparable(nlohmann::json config)
{
    config.erase("seeds");
    config.erase("out");
    return config;
}

} // namespace

SummaryRow summarise(const std::string& dir)
{
    namespace fs = std::filesystem;
    std::vector<fs::path> files;
    if (fs::is_directory(dir))
    {
        for (const auto& e : fs::directory_iterator(dir))
        {
            const std::string fn = e.path().filename().string();
            if (e.is_regular_file() && fn.starts_with("metrics_seed") && fn.ends_with(".csv"))
            {
                files.push_back(e.path());
            }
        }
    }
    if (files.empty())
    {
        throw ConfigError("no metrics_seed*.csv files in '" + dir + "'");
    }
    std::sort(files.begin(), files.end());

    SummaryRow row;
    std::optional<nlohmann::json> reference;
    std::vector<double> losses, accs;
    for (const fs::path& p : files)
    {
        const MetricsFile f = read_metrics_csv(p.string());
        const nlohmann::json cfg = comparable(f.config);
        if (!reference)
        {
            reference = cfg;
        }
        else if (*reference != cfg)
        {
            throw ConfigError("refusing to summarise '" + dir + "': " + p.filename().string() +
                              " was produced by a different configuration");
        }
        const std::size_t c_split = column(f, "split");
        const std::size_t c_loss  = column(f, "loss");
        const std::size_t c_acc   = column(f, "accuracy");
        const std::size_t c_id    = column(f, "run_id");

        const std::vector<std::string>* final_test = nullptr;
        bool diverged = false;
        for (const auto& r : f.rows)
        {
            if (row.run_id.empty() && c_id < r.size())
                row.run_id = r[c_id];
            if (r.at(c_split) == "diverged")
                diverged = true;
            else if (r.at(c_split) == "test")
                final_test = &r;
        }
        if (diverged)
        {
            ++row.diverged;
            continue;
        }
        if (!final_test)
        {
            continue;
        }
        losses.push_back(std::stod(final_test->at(c_loss)));
        accs.push_back(std::stod(final_test->at(c_acc)));
    }
    if (row.run_id.empty() && reference)
    {
        row.run_id = reference->value("name", "");
    }
    row.runs                         = static_cast<Index>(accs.size());
    std::tie(row.loss_mean, row.loss_se) = mean_and_standard_error(losses);
    std::tie(row.acc_mean, row.acc_se)   = mean_and_standard_error(accs);
    return row;
}

std::string write_summary(const std::string& dir, const SummaryRow& row)
{
    const std::string path = (std::filesystem::path(dir) / "summary.csv").string();
    std::ofstream os(path);
    if (!os)
    {
        throw ConfigError("cannot write '" + path + "'");
    }
    auto num = [](double v) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.4f", v);
        return std::string(buf);
    };
    auto opt = [&](const std::optional<double>& v) { return v ? num(*v) : std::string(); };
    os << "run_id,runs,diverged,test_loss,test_loss_se,test_accuracy,test_accuracy_se,test_accuracy_pm\n";
    os << row.run_id << ',' << row.runs << ',' << row.diverged << ',' << num(row.loss_mean) << ','
       << opt(row.loss_se) << ',' << num(row.acc_mean) << ',' << opt(row.acc_se) << ','
       << format_mean_se(row.acc_mean, row.acc_se) << "\n";
    return path;
}

} // namespace orthograd
