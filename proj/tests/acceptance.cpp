// Acceptance run: one PASS / FAIL / NOT RUN line per criterion.
//
//   acceptance [--criteria 1,2,...] [--cifar-dir DIR] [--out DIR]
//
// Criteria 5 and 6 train on CIFAR-10 and only run when a directory with the
// binary batches is given (or ORTHOGRAD_CIFAR10_DIR is set). Exit status is
// 1 if anything failed, 77 if nothing selected could run, 0 otherwise.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "orthograd/diagnostics.hpp"
#include "orthograd/experiment.hpp"
#include "orthograd/linalg.hpp"

using namespace orthograd;
namespace fs = std::filesystem;

namespace
{

enum class Status
{
    Pass,
    Fail,
    NotRun,
};

struct Outcome
{
    Status status = Status::Fail;
    std::string detail;
};

Outcome verdict(bool ok, std::string detail) { return {ok ? Status::Pass : Status::Fail, std::move(detail)}; }

std::string fmt(const char* f, double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

MatrixXd random_matrix(Rng& rng, Index rows, Index cols)
{
    MatrixXd m(rows, cols);
    for (Index i = 0; i < m.size(); ++i)
        m.data()[i] = rng.normal();
    return m;
}

double median(std::vector<double> xs)
{
    std::sort(xs.begin(), xs.end());
    const std::size_t n = xs.size();
    return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

// ---------------------------------------------------------------------------

Outcome orthonormality_suite()
{
    Rng rng(20240601);
    double worst_orth = 0.0, worst_rec = 0.0;
    int rank_deficient = 0, wide = 0;
    for (int t = 0; t < 1000; ++t)
    {
        Index p = 1 + static_cast<Index>(rng.below(512));
        Index n = 1 + static_cast<Index>(rng.below(64));
        MatrixXd g;
        if (t % 4 == 1 && std::min(p, n) > 1)
        {
            const Index r = 1 + static_cast<Index>(rng.below(static_cast<std::uint64_t>(std::min(p, n) - 1)));
            g = random_matrix(rng, p, r) * random_matrix(rng, r, n);
            ++rank_deficient;
        }
        else
        {
            g = random_matrix(rng, p, n);
        }
        if (t % 10 == 3)
        {
            g.transposeInPlace();
            ++wide;
        }
        const MatrixXd o = nearest_orthonormal(g);
        const MatrixXd gram = o.rows() >= o.cols() ? MatrixXd(o.transpose() * o) : MatrixXd(o * o.transpose());
        worst_orth = std::max(worst_orth, (gram - MatrixXd::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff());
        const SvdResult<double> s = svd(g);
        const double rec = (s.u * s.sigma.asDiagonal() * s.vt - g).norm() / g.norm();
        worst_rec = std::max(worst_rec, rec);
    }
    return verdict(worst_orth <= 1e-8 && worst_rec <= 1e-9,
                   "max |O^T O - I| " + fmt("%.2e", worst_orth) + ", max reconstruction/|G| " +
                       fmt("%.2e", worst_rec) + ", " + std::to_string(rank_deficient) + " rank-deficient, " +
                       std::to_string(wide) + " wide");
}

Outcome polar_oracle()
{
    Rng rng(11);
    double worst_sym = 0.0, min_eig = 1e300;
    for (int t = 0; t < 200; ++t)
    {
        const MatrixXd g = random_matrix(rng, 4, 3);
        const MatrixXd h = nearest_orthonormal(g).transpose() * g;
        worst_sym        = std::max(worst_sym, (h - h.transpose()).cwiseAbs().maxCoeff());
        min_eig          = std::min(min_eig, oracle::symmetric_eigenvalues((h + h.transpose()) / 2.0).minCoeff());
    }
    double worst_margin = -1e300;
    for (int t = 0; t < 50; ++t)
    {
        const MatrixXd g = random_matrix(rng, 2, 2);
        const double d   = (nearest_orthonormal(g) - g).norm();
        worst_margin     = std::max(worst_margin, d - oracle::best_grid_distance_2x2(g, 10000));
    }
    return verdict(worst_sym <= 1e-8 && min_eig >= -1e-8 && worst_margin <= 1e-12,
                   "max asymmetry " + fmt("%.2e", worst_sym) + ", min eigenvalue " + fmt("%.3e", min_eig) +
                       ", 2x2 distance minus best grid point " + fmt("%.2e", worst_margin));
}

Outcome gradient_correctness()
{
    std::vector<std::pair<std::string, ModelSpec>> cases;
    {
        ModelSpec s{"conv", {2, 5, 5}, {}};
        s.layers = {LayerSpec::conv("conv", 2, 3, 3, 2, 1), LayerSpec::flatten(), LayerSpec::dense("fc", 27, 3)};
        cases.emplace_back("conv2d", s);
    }
    {
        ModelSpec s{"bn", {2, 3, 3}, {}};
        s.layers = {LayerSpec::batch_norm("bn", 2), LayerSpec::flatten(), LayerSpec::dense("fc", 18, 4)};
        cases.emplace_back("batch_norm", s);
    }
    {
        ModelSpec s{"mlp", {6}, {}};
        s.layers = {LayerSpec::dense("fc1", 6, 5), LayerSpec::relu(), LayerSpec::dense("fc2", 5, 3)};
        cases.emplace_back("dense+relu", s);
    }
    {
        ModelSpec s{"stack", {3, 8, 8}, {}};
        s.layers = {LayerSpec::conv("conv1", 3, 4, 3, 2, 1), LayerSpec::batch_norm("bn1", 4), LayerSpec::relu("relu1"),
                    LayerSpec::conv("conv2", 4, 4, 3, 2, 1), LayerSpec::batch_norm("bn2", 4), LayerSpec::relu("relu2"),
                    LayerSpec::flatten(), LayerSpec::dense("fc", 16, 10)};
        cases.emplace_back("conv/bn/relu stack", s);
    }
    double worst = 0.0;
    std::string where;
    for (std::size_t i = 0; i < cases.size(); ++i)
    {
        for (const auto& e : gradcheck::gradient_check(cases[i].second, 3, 500 + i))
        {
            if (e.error >= worst)
            {
                worst = e.error;
                where = cases[i].first + ":" + e.name;
            }
        }
    }
    return verdict(worst <= 1e-4, "worst relative error " + fmt("%.2e", worst) + " at " + where);
}

RunConfig synthetic_config(const fs::path& out)
{
    RunConfig c;
    c.batch_size = 100;
    c.epochs     = 3;
    c.out_dir    = out.string();
    return c;
}

Outcome identity_composition(const fs::path& root)
{
    std::string detail;
    bool ok = true;
    for (auto kind : {OptimizerKind::Sgdm, OptimizerKind::Adam, OptimizerKind::Lars})
    {
        const std::string opt(to_string(kind));
        RunConfig with = synthetic_config(root / (opt + "_identity"));
        with.optimiser = kind;
        with.name      = "identity_check_" + opt;
        if (kind == OptimizerKind::Adam)
            with.hp.lr = 1e-3;
        with.transform      = TransformKind::Identity;
        RunConfig plain     = with;
        plain.transform     = std::nullopt;
        plain.out_dir       = (root / (opt + "_plain")).string();
        const auto a        = run_experiment(with);
        const auto b        = run_experiment(plain);
        const bool same     = deterministic_body(read_metrics_csv(a.seeds[0].csv_path)) ==
                          deterministic_body(read_metrics_csv(b.seeds[0].csv_path));
        const bool finished = !a.seeds[0].diverged && a.seeds[0].records.size() == 6;
        ok                  = ok && same && finished;
        detail += (detail.empty() ? "" : ", ") + opt + (same ? " identical" : " DIFFERENT") +
                  (finished ? "" : " (incomplete)");
    }
    return verdict(ok, detail);
}

struct CifarRuns
{
    std::vector<SeedResult> sgdm, osgdm;
};

std::optional<CifarRuns> cifar_runs(const std::string& dir, const fs::path& root)
{
    if (dir.empty() || !fs::exists(fs::path(dir) / "data_batch_1.bin") || !fs::exists(fs::path(dir) / "test_batch.bin"))
        return std::nullopt;
    RunConfig c;
    c.data         = dir;
    c.train_subset = 5000;
    c.batch_size   = 256;
    c.hp           = {1e-2, 0.9, 5e-4};
    c.epochs       = 20;
    c.seeds        = {0, 1, 2};
    const LoadedData data = load_data(c);

    RunConfig sgdm = c;
    sgdm.transform = std::nullopt;
    sgdm.out_dir   = (root / "sgdm").string();
    RunConfig osgdm = c;
    osgdm.transform = TransformKind::Orthogonalise;
    osgdm.out_dir   = (root / "osgdm").string();
    std::fprintf(stderr, "training SGDM and OSGDM on %s (3 seeds x 20 epochs each)\n", dir.c_str());
    return CifarRuns{run_experiment(sgdm, data).seeds, run_experiment(osgdm, data).seeds};
}

double test_accuracy_at(const SeedResult& r, Index epoch)
{
    for (const auto& rec : r.records)
        if (rec.split == "test" && rec.epoch == epoch)
            return rec.accuracy;
    return std::numeric_limits<double>::quiet_NaN();
}

Outcome cifar_speedup(const CifarRuns& runs)
{
    auto med = [](const std::vector<SeedResult>& rs, Index epoch) {
        std::vector<double> v;
        for (const auto& r : rs)
            v.push_back(test_accuracy_at(r, epoch));
        return median(v);
    };
    const double s20 = med(runs.sgdm, 20), o20 = med(runs.osgdm, 20);
    const double s5 = med(runs.sgdm, 5), o5 = med(runs.osgdm, 5);
    return verdict(o20 - s20 >= 2.0 && o5 > s5,
                   "median test accuracy SGDM " + fmt("%.2f", s20) + "% vs OSGDM " + fmt("%.2f", o20) +
                       "% (gap " + fmt("%+.2f", o20 - s20) + "); epoch 5: " + fmt("%.2f", s5) + "% vs " +
                       fmt("%.2f", o5) + "%");
}

Outcome cifar_diversity(const CifarRuns& runs)
{
    auto final_r = [](const std::vector<SeedResult>& rs, std::size_t layer) {
        double sum = 0.0;
        int n      = 0;
        for (const auto& r : rs)
        {
            const auto& last = r.records.back();
            if (last.split == "test" && layer < last.r_mean.size() && last.r_mean[layer])
            {
                sum += *last.r_mean[layer];
                ++n;
            }
        }
        return n ? sum / n : std::numeric_limits<double>::quiet_NaN();
    };
    int lower = 0;
    std::string detail;
    for (std::size_t l = 0; l < 3; ++l)
    {
        const double s = final_r(runs.sgdm, l), o = final_r(runs.osgdm, l);
        if (o < s)
            ++lower;
        detail += (l ? ", " : "") + std::string("conv") + std::to_string(l + 1) + " " + fmt("%.4f", s) + " -> " +
                  fmt("%.4f", o);
    }
    return verdict(lower >= 2, "mean |cos| SGDM -> OSGDM: " + detail + "; lower in " + std::to_string(lower) + "/3");
}

Outcome null_statistics()
{
    std::string detail;
    bool ok = true;
    for (Index n : {16, 256, 4096})
    {
        const NullCosineSample s = sample_null_cosines(n, 100000, 7 + static_cast<std::uint64_t>(n));
        const double ratio       = s.stddev * std::sqrt(static_cast<double>(n));
        const bool good          = std::abs(ratio - 1.0) <= 0.1 && s.exceed_fraction < 1e-3;
        ok                       = ok && good;
        detail += (detail.empty() ? "" : "; ") + std::string("N=") + std::to_string(n) + " std*sqrt(N) " +
                  fmt("%.4f", ratio) + " exceed " + fmt("%.1e", s.exceed_fraction);
    }
    return verdict(ok, detail);
}

Outcome degenerate_batch(const fs::path& root)
{
    std::string detail;
    bool ok = true;
    for (bool orth : {false, true})
    {
        RunConfig c = synthetic_config(root / (orth ? "osgdm" : "sgdm"));
        c.batch_size = 4;
        c.epochs     = 2;
        c.transform  = orth ? std::optional(TransformKind::Orthogonalise) : std::nullopt;
        const auto res   = run_experiment(c);
        const auto& seed = res.seeds.at(0);
        const MetricsFile f = read_metrics_csv(seed.csv_path);
        bool complete       = !seed.diverged && f.rows.size() == 4 && fs::exists(res.summary_path);
        for (const auto& col : {"r_mean_conv1", "r_mean_conv2", "r_mean_conv3", "dead_params", "svd_time_s"})
            complete = complete && std::find(f.columns.begin(), f.columns.end(), col) != f.columns.end();
        for (const auto& row : f.rows)
            complete = complete && row.size() == f.columns.size();
        const double svd = seed.records.empty() ? 0.0 : seed.records.back().svd_time_s;
        complete         = complete && (orth ? svd > 0.0 : svd == 0.0);
        ok               = ok && complete;
        detail += (orth ? "; OSGDM " : "SGDM ") +
                  (seed.records.empty() ? std::string("no records")
                                        : fmt("%.2f", seed.records.back().accuracy) + "% test, svd " +
                                              fmt("%.2f", svd) + " s") +
                  (complete ? "" : " (INCOMPLETE)");
    }
    return verdict(ok, detail);
}

Outcome reproducibility(const fs::path& root)
{
    RunConfig c   = synthetic_config(root / "first");
    c.transform   = TransformKind::Orthogonalise;
    c.epochs      = 2;
    c.seeds       = {0, 1};
    const auto a  = run_experiment(c);
    c.out_dir     = (root / "second").string();
    const auto b  = run_experiment(c);
    bool same     = a.seeds.size() == b.seeds.size();
    for (std::size_t i = 0; same && i < a.seeds.size(); ++i)
        same = deterministic_body(read_metrics_csv(a.seeds[i].csv_path)) ==
               deterministic_body(read_metrics_csv(b.seeds[i].csv_path));
    return verdict(same, same ? "metrics bodies identical for seeds 0 and 1 (timing columns excluded)"
                              : "metrics bodies differ");
}

std::set<int> parse_criteria(const std::string& s)
{
    std::set<int> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ','))
        if (!tok.empty())
            out.insert(std::stoi(tok));
    return out;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Acceptance checks"};
    std::string criteria = "1,2,3,4,5,6,7,8,9";
    std::string cifar_dir;
    std::string out = "acceptance_runs";
    app.add_option("--criteria", criteria, "Comma-separated subset to run");
    app.add_option("--cifar-dir", cifar_dir, "CIFAR-10 binary directory (default: $ORTHOGRAD_CIFAR10_DIR)");
    app.add_option("--out", out, "Scratch directory for run outputs");
    CLI11_PARSE(app, argc, argv);
    if (cifar_dir.empty())
        if (const char* env = std::getenv("ORTHOGRAD_CIFAR10_DIR"))
            cifar_dir = env;

    const std::set<int> selected = parse_criteria(criteria);
    const fs::path root(out);
    std::optional<CifarRuns> cifar;
    bool cifar_tried = false;
    auto need_cifar  = [&]() -> const CifarRuns* {
        if (!cifar_tried)
        {
            cifar_tried = true;
            fs::remove_all(root / "cifar");
            cifar = cifar_runs(cifar_dir, root / "cifar");
        }
        return cifar ? &*cifar : nullptr;
    };
    const std::string no_data = cifar_dir.empty()
                                    ? "CIFAR-10 not available; pass --cifar-dir or set ORTHOGRAD_CIFAR10_DIR"
                                    : "no CIFAR-10 binary batches in '" + cifar_dir + "'";

    const std::map<int, std::pair<std::string, std::function<Outcome()>>> table{
        {1, {"orthonormality suite", orthonormality_suite}},
        {2, {"polar-factor oracle", polar_oracle}},
        {3, {"gradient correctness", gradient_correctness}},
        {4, {"identity composition", [&] { return identity_composition(root / "identity"); }}},
        {5, {"CIFAR-10 speed-up (5k subset, 20 epochs, 3 seeds)",
             [&] {
                 const CifarRuns* r = need_cifar();
                 return r ? cifar_speedup(*r) : Outcome{Status::NotRun, no_data};
             }}},
        {6, {"representation diversity",
             [&] {
                 const CifarRuns* r = need_cifar();
                 return r ? cifar_diversity(*r) : Outcome{Status::NotRun, no_data};
             }}},
        {7, {"null cosine statistics", null_statistics}},
        {8, {"batch size 4", [&] { return degenerate_batch(root / "batch4"); }}},
        {9, {"reproducibility", [&] { return reproducibility(root / "repro"); }}},
    };

    int failed = 0, ran = 0;
    for (const auto& [id, entry] : table)
    {
        if (!selected.contains(id))
            continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try
        {
            o = entry.second();
        }
        catch (const std::exception& e)
        {
            o = {Status::Fail, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const char* tag   = o.status == Status::Pass ? "PASS" : o.status == Status::Fail ? "FAIL" : "NOT RUN";
        std::printf("criterion %d %-7s %s: %s [%.1f s]\n", id, tag, entry.first.c_str(), o.detail.c_str(), secs);
        std::fflush(stdout);
        failed += o.status == Status::Fail;
        ran += o.status != Status::NotRun;
    }
    if (failed)
        return 1;
    return ran == 0 ? 77 : 0;
}
