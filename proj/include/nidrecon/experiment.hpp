#ifndef NIDRECON_EXPERIMENT_HPP
#define NIDRECON_EXPERIMENT_HPP

// Configuration-driven pipelines behind the command-line tool: phantom,
// simulate, reconstruct, metrics and plot-flux.  Every pipeline resolves the
// full configuration (defaults filled in), writes it as a manifest next to
// its outputs, and is deterministic for a given manifest.

#include "config.hpp"
#include "io.hpp"
#include "metrics.hpp"
#include "optimizer.hpp"
#include "phantom.hpp"

#include <fftw3.h>
#include <png.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace nidrecon {

inline constexpr const char* version = "0.1.0";

/// Reads keys with defaults and records every resolved value.
class ConfigResolver {
public:
    explicit ConfigResolver(const Config& in) : in_(in) {}

    double num(const std::string& key, double fallback)
    {
        const double v = in_.get_double(key, fallback);
        out_.set(key, {v});
        return v;
    }
    int integer(const std::string& key, int fallback)
    {
        const auto v = in_.get_int(key, fallback);
        if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max())
            throw ConfigError("config key '" + key + "' is out of range");
        out_.set(key, {v});
        return static_cast<int>(v);
    }
    std::uint64_t seed(const std::string& key, std::uint64_t fallback)
    {
        const auto v = in_.get_int(key, static_cast<std::int64_t>(fallback));
        if (v < 0) throw ConfigError("config key '" + key + "' must be non-negative");
        out_.set(key, {v});
        return static_cast<std::uint64_t>(v);
    }
    bool flag(const std::string& key, bool fallback)
    {
        const bool v = in_.get_bool(key, fallback);
        out_.set(key, {v});
        return v;
    }
    std::string text(const std::string& key, const std::string& fallback)
    {
        std::string v = in_.get_string(key, fallback);
        out_.set(key, {v});
        return v;
    }
    std::vector<double> numbers(const std::string& key, const std::vector<double>& fallback)
    {
        auto v = in_.get_doubles(key, fallback);
        ConfigArray arr;
        for (double x : v) arr.push_back({x});
        out_.set(key, {arr});
        return v;
    }
    std::vector<std::string> strings(const std::string& key, const std::vector<std::string>& fallback)
    {
        auto v = in_.get_strings(key, fallback);
        ConfigArray arr;
        for (const auto& x : v) arr.push_back({x});
        out_.set(key, {arr});
        return v;
    }

    /// keys present in the input but never read
    std::vector<std::string> unused() const
    {
        std::vector<std::string> out;
        for (const auto& [key, val] : in_.values())
            if (!out_.has(key)) out.push_back(key);
        return out;
    }

    const Config& resolved() const { return out_; }

private:
    const Config& in_;
    Config out_;
};

struct ExperimentConfig {
    int n = 256;
    int p = 180;
    int q = 180;
    PhantomTable table = PhantomTable::modified;
    NoiseConfig noise;

    std::string method = "fbp";
    std::string init = "zero"; // zero | fbp
    double fbp_cutoff = 0.0;   // <= 0: Nyquist

    // regularization weights are given in units of h^2, smoothing in pixels
    double tv_beta_h2 = 0.8;
    double tv_epsilon = 0.01;
    double tv_alpha = 0.0;
    double nid_gamma_h2 = 2.2;
    double nid_sigma_px = 0.32;
    double nid_alpha = 1e-6;
    double threshold_scale = 0.15625;
    std::vector<double> thresholds; // gradient-magnitude thresholds; empty: derived from the phantom

    int nid1_count = 1;
    std::vector<double> nid1_weights;
    int nid2_count = 2;
    double nid2_width = 1.0; // in units of the smallest threshold
    int nid3_count = 2;
    double nid3_width = 1.0;
    double nid3_step = 0.01; // table step in units of the smallest threshold
    std::string nid3_pattern;

    std::string schedule = "sigmoid"; // sigmoid | constant | step
    double anid_midpoint = 300.0;
    double anid_steepness = 0.02;
    double anid_zeta0 = 1.0;
    double anid_omega = 1.0;
    int anid_step_at = 0;
    int anid_warmup = 0; // audit variation slack for n > warmup

    LineSearchConfig ls;
    StopCriteria stop;

    std::string out_dir = "out";
    bool png = true;

    std::vector<std::string> plot_families = {"av", "pm1", "pm2", "nid1", "nid2", "nid3"};
    double plot_s_max = 0.0; // <= 0: four times the largest threshold in use
    int plot_samples = 801;

    std::string metrics_reference;
    std::string metrics_test;

    Config resolved;

    GridSpec grid() const { return GridSpec(n); }
    SinogramGeometry geometry() const { return SinogramGeometry(p, q); }
    double h() const { return 2.0 / n; }

    static ExperimentConfig resolve(const Config& in)
    {
        ExperimentConfig c;
        ConfigResolver r(in);
        c.n = r.integer("grid.n", c.n);
        c.p = r.integer("sinogram.p", c.p);
        c.q = r.integer("sinogram.q", c.q);
        c.table = parse_phantom_table(r.text("phantom.table", "modified"));
        c.noise.snr_db = r.num("noise.snr_db", c.noise.snr_db);
        c.noise.seed = r.seed("noise.seed", c.noise.seed);

        c.method = r.text("method.name", c.method);
        static const std::set<std::string> methods = {"fbp",  "tv",    "nid1",  "nid2",
                                                      "nid3", "anid1", "anid2", "anid3"};
        if (!methods.count(c.method)) throw ConfigError("unknown method '" + c.method + "'");
        c.init = r.text("method.init", c.init);
        if (c.init != "zero" && c.init != "fbp") throw ConfigError("method.init must be zero or fbp");
        c.fbp_cutoff = r.num("fbp.cutoff", c.fbp_cutoff);

        c.tv_beta_h2 = r.num("tv.beta_h2", c.tv_beta_h2);
        c.tv_epsilon = r.num("tv.epsilon", c.tv_epsilon);
        c.tv_alpha = r.num("tv.alpha", c.tv_alpha);
        c.nid_gamma_h2 = r.num("nid.gamma_h2", c.nid_gamma_h2);
        c.nid_sigma_px = r.num("nid.sigma_px", c.nid_sigma_px);
        c.nid_alpha = r.num("nid.alpha", c.nid_alpha);
        c.threshold_scale = r.num("nid.threshold_scale", c.threshold_scale);
        c.thresholds = r.numbers("nid.thresholds", c.thresholds);

        c.nid1_count = r.integer("nid1.count", c.nid1_count);
        c.nid1_weights = r.numbers("nid1.weights", c.nid1_weights);
        c.nid2_count = r.integer("nid2.count", c.nid2_count);
        c.nid2_width = r.num("nid2.width", c.nid2_width);
        c.nid3_count = r.integer("nid3.count", c.nid3_count);
        c.nid3_width = r.num("nid3.width", c.nid3_width);
        c.nid3_step = r.num("nid3.step", c.nid3_step);
        c.nid3_pattern = r.text("nid3.pattern", c.nid3_pattern);

        c.schedule = r.text("anid.schedule", c.schedule);
        c.anid_midpoint = r.num("anid.midpoint", c.anid_midpoint);
        c.anid_steepness = r.num("anid.steepness", c.anid_steepness);
        c.anid_zeta0 = r.num("anid.zeta0", c.anid_zeta0);
        c.anid_omega = r.num("anid.omega", c.anid_omega);
        c.anid_step_at = r.integer("anid.step_at", c.anid_step_at);
        // the descent condition is only asked of n > N; by default N is where the
        // sigmoid hands over from TV, and the first iteration for other schedules
        const int warmup = c.schedule == "sigmoid" ? static_cast<int>(std::ceil(std::max(c.anid_midpoint, 0.0))) : 0;
        c.anid_warmup = r.integer("anid.warmup", warmup);

        const std::string mode = r.text("linesearch.mode", "armijo");
        if (mode == "armijo") {
            c.ls.mode = LineSearchConfig::Mode::armijo;
        } else if (mode == "wolfe") {
            c.ls.mode = LineSearchConfig::Mode::wolfe;
        } else {
            throw ConfigError("linesearch.mode must be armijo or wolfe");
        }
        c.ls.mu = r.num("linesearch.mu", c.ls.mu);
        c.ls.rho = r.num("linesearch.rho", c.ls.rho);
        c.ls.backtrack = r.num("linesearch.backtrack", c.ls.backtrack);
        c.ls.tau0 = r.num("linesearch.tau0", c.ls.tau0);
        c.ls.max_backtracks = r.integer("linesearch.max_backtracks", c.ls.max_backtracks);
        c.ls.barzilai_borwein = r.flag("linesearch.barzilai_borwein", !c.is_adaptive());

        c.stop.max_iterations = r.integer("stop.max_iterations", 800);
        c.stop.grad_tol = r.num("stop.grad_tol", c.stop.grad_tol);
        c.stop.value_tol = r.num("stop.value_tol", c.stop.value_tol);

        c.out_dir = r.text("output.dir", c.out_dir);
        c.png = r.flag("output.png", c.png);

        c.plot_families = r.strings("plot.families", c.plot_families);
        c.plot_s_max = r.num("plot.s_max", c.plot_s_max);
        c.plot_samples = r.integer("plot.samples", c.plot_samples);

        c.metrics_reference = r.text("metrics.reference", c.metrics_reference);
        c.metrics_test = r.text("metrics.test", c.metrics_test);

        const auto extra = r.unused();
        if (!extra.empty()) throw ConfigError("unknown config key '" + extra.front() + "'");
        c.validate();
        c.resolved = r.resolved();
        return c;
    }

    bool is_adaptive() const { return method.rfind("anid", 0) == 0; }

    void validate() const
    {
        if (n < 2) throw ConfigError("grid.n must be >= 2");
        if (p < 1 || q < 2) throw ConfigError("sinogram needs p >= 1 and q >= 2");
        if (!(tv_beta_h2 > 0.0) || !(tv_epsilon > 0.0) || !(tv_alpha >= 0.0))
            throw ConfigError("tv: beta_h2 and epsilon must be positive, alpha >= 0");
        if (!(nid_gamma_h2 >= 0.0) || !(nid_sigma_px > 0.0) || !(nid_alpha >= 0.0))
            throw ConfigError("nid: gamma_h2 >= 0, sigma_px > 0 and alpha >= 0 required");
        if (!(threshold_scale > 0.0)) throw ConfigError("nid.threshold_scale must be positive");
        if (nid1_count < 1 || nid2_count < 1 || nid3_count < 1) throw ConfigError("nid*.count must be >= 1");
        if (!nid1_weights.empty() && static_cast<int>(nid1_weights.size()) != nid1_count)
            throw ConfigError("nid1.weights must have nid1.count entries");
        if (!(nid2_width > 0.0) || !(nid3_width > 0.0) || !(nid3_step > 0.0))
            throw ConfigError("nid2/nid3 width and step must be positive");
        if (schedule != "sigmoid" && schedule != "constant" && schedule != "step")
            throw ConfigError("anid.schedule must be sigmoid, constant or step");
        if (anid_warmup < 0) throw ConfigError("anid.warmup must be >= 0");
        if (plot_samples < 2) throw ConfigError("plot.samples must be >= 2");
        try {
            ls.validate();
            stop.validate();
            schedule_object().validate();
        } catch (const ParameterError& e) {
            throw ConfigError(e.what());
        }
    }

    AnidSchedule schedule_object() const
    {
        AnidSchedule s;
        if (schedule == "constant") {
            s.kind = AnidSchedule::Kind::constant;
            s.omega_value = anid_omega;
        } else if (schedule == "step") {
            s.kind = AnidSchedule::Kind::step;
            s.step_at = anid_step_at;
        } else {
            s.kind = AnidSchedule::Kind::sigmoid;
            s.midpoint = anid_midpoint;
            s.steepness = anid_steepness;
        }
        s.zeta0 = anid_zeta0;
        return s;
    }

    TvConfig tv_config() const { return {tv_beta_h2 * h() * h(), tv_epsilon, tv_alpha}; }
};

/// Distinct absolute differences between the gray levels of an image, sorted.
inline std::vector<double> gray_level_jumps(const Image& f)
{
    std::set<double> levels;
    for (double v : f.values()) levels.insert(std::round(v * 1e9) / 1e9);
    std::set<double> jumps;
    for (auto a = levels.begin(); a != levels.end(); ++a)
        for (auto b = std::next(a); b != levels.end(); ++b) jumps.insert(std::round((*b - *a) * 1e9) / 1e9);
    jumps.erase(0.0);
    return {jumps.begin(), jumps.end()};
}

/// Gradient-magnitude thresholds: explicit list, or scale * jump / h for the
/// phantom's gray-level jumps.
inline std::vector<double> diffusion_thresholds(const ExperimentConfig& c, const Image& phantom)
{
    if (!c.thresholds.empty()) {
        for (double t : c.thresholds)
            if (!(t > 0.0)) throw ConfigError("nid.thresholds must be positive");
        std::vector<double> t = c.thresholds;
        std::sort(t.begin(), t.end());
        return t;
    }
    std::vector<double> t;
    for (double j : gray_level_jumps(phantom)) t.push_back(c.threshold_scale * j / c.h());
    if (t.empty()) throw ConfigError("phantom is constant: cannot derive diffusion thresholds; set nid.thresholds");
    return t;
}

namespace detail {

inline std::vector<double> take(const std::vector<double>& v, int count)
{
    if (count > static_cast<int>(v.size()))
        throw ConfigError("requested " + std::to_string(count) + " thresholds but only " + std::to_string(v.size()) +
                          " are available");
    return {v.begin(), v.begin() + count};
}

// shifts s_k = t_k - t_1 so the first term starts at zero
inline std::vector<double> shifts_from(const std::vector<double>& t)
{
    std::vector<double> s;
    for (double x : t) s.push_back(x - t.front());
    return s;
}

} // namespace detail

/// Samples of psi' for psi(s) = s * sum_k exp(-(s - s_k)^2 / w^2), on s = i*step
/// up to the last shift plus eight widths.
struct FluxPattern {
    double step;
    std::vector<double> slope;
};

inline FluxPattern gaussian_bump_pattern(const std::vector<double>& shifts, double width, double step)
{
    const double range = shifts.back() + 8.0 * width;
    const auto m = static_cast<std::size_t>(std::ceil(range / step)) + 1;
    FluxPattern pat{step, std::vector<double>(m)};
    for (std::size_t i = 0; i < m; ++i) {
        const double s = i * step;
        double d = 0.0;
        for (double sk : shifts) {
            const double u = (s - sk) / width;
            d += std::exp(-u * u) * (1.0 - 2.0 * s * (s - sk) / (width * width));
        }
        pat.slope[i] = d;
    }
    return pat;
}

inline void write_pattern_csv(const std::filesystem::path& path, const FluxPattern& pat)
{
    std::string text = "s,dpsi\n";
    for (std::size_t i = 0; i < pat.slope.size(); ++i)
        text += format_double(i * pat.step) + "," + format_double(pat.slope[i]) + "\n";
    write_text(path, text);
}

/// Two-column (s, psi') CSV on a uniform grid starting at s = 0; a header line is allowed.
inline FluxPattern read_pattern_csv(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot open pattern file '" + path.string() + "'");
    std::vector<double> s, d;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw IoError("pattern file: expected two columns");
        try {
            const double a = std::stod(line.substr(0, comma));
            const double b = std::stod(line.substr(comma + 1));
            s.push_back(a);
            d.push_back(b);
        } catch (const std::invalid_argument&) {
            if (s.empty()) continue; // header
            throw IoError("pattern file: bad number in '" + line + "'");
        }
    }
    if (s.size() < 2) throw IoError("pattern file: need at least two rows");
    const double step = s[1] - s[0];
    if (s[0] != 0.0 || !(step > 0.0)) throw IoError("pattern file: grid must start at 0 and increase");
    for (std::size_t i = 1; i < s.size(); ++i)
        if (std::abs(s[i] - i * step) > 1e-9 * std::max(1.0, s[i])) throw IoError("pattern file: grid is not uniform");
    return {step, d};
}

/// Diffusion family of a NID variant ("nid1", "nid2", "nid3") built from the thresholds.
inline PenaltyFamily nid_family(const std::string& variant, const ExperimentConfig& c,
                                const std::vector<double>& thresholds, FluxPattern* pattern_out = nullptr)
{
    if (variant == "nid1") {
        const auto lambdas = detail::take(thresholds, c.nid1_count);
        Nid1 f;
        for (std::size_t k = 0; k < lambdas.size(); ++k)
            f.terms.push_back({c.nid1_weights.empty() ? 1.0 : c.nid1_weights[k], lambdas[k]});
        return PenaltyFamily(f);
    }
    if (variant == "nid2") {
        const auto t = detail::take(thresholds, c.nid2_count);
        Nid2 f;
        for (double s : detail::shifts_from(t)) f.terms.push_back({1.0, c.nid2_width * t.front(), s});
        return PenaltyFamily(f);
    }
    if (variant == "nid3") {
        FluxPattern pat;
        if (!c.nid3_pattern.empty()) {
            pat = read_pattern_csv(c.nid3_pattern);
        } else {
            const auto t = detail::take(thresholds, c.nid3_count);
            pat = gaussian_bump_pattern(detail::shifts_from(t), c.nid3_width * t.front(), c.nid3_step * t.front());
        }
        if (pattern_out) *pattern_out = pat;
        try {
            return build_nid3(pat.step, pat.slope);
        } catch (const ParameterError& e) {
            throw ConfigError(e.what());
        }
    }
    throw ConfigError("unknown NID variant '" + variant + "'");
}

inline NidConfig nid_config(const ExperimentConfig& c, PenaltyFamily family)
{
    const double h = c.h();
    return NidConfig{{{c.nid_gamma_h2 * h * h, c.nid_sigma_px * h, std::move(family)}}, c.nid_alpha};
}

/// Ground truth and data shared by all pipelines.
struct Scenario {
    Image phantom;
    ProjectionMatrix matrix;
    Sinogram clean;
    Sinogram noisy;
};

inline Scenario make_scenario(const ExperimentConfig& c)
{
    Scenario s;
    s.phantom = shepp_logan_phantom(c.grid(), c.table);
    s.matrix = build_projection_matrix(c.grid(), c.geometry());
    s.clean = forward_project(s.matrix, s.phantom);
    s.noisy = add_noise(s.clean, c.noise);
    return s;
}

struct Reconstruction {
    Image image;
    std::optional<IterationTrace> trace;
    FluxPattern pattern; // NID3 runs only
};

/// Runs the configured method on the given data.  Line-search failures
/// propagate as LineSearchError carrying the partial trace.
inline Reconstruction reconstruct(const ExperimentConfig& c, const Scenario& s)
{
    Reconstruction out;
    const auto& a = s.matrix;
    const auto& g = s.noisy;
    if (c.method == "fbp") {
        out.image = fbp_reconstruct(a, g, c.fbp_cutoff);
        return out;
    }
    const Image f0 = c.init == "fbp" ? fbp_reconstruct(a, g, c.fbp_cutoff) : Image(c.grid());
    if (c.method == "tv") {
        auto res = solve_tv(g, a, c.tv_config(), c.ls, c.stop, f0);
        out.image = std::move(res.f);
        out.trace = std::move(res.trace);
        return out;
    }
    const std::string variant = c.is_adaptive() ? c.method.substr(1) : c.method;
    const auto thresholds = diffusion_thresholds(c, s.phantom);
    NidConfig nid = nid_config(c, nid_family(variant, c, thresholds, &out.pattern));
    DescentResult res = c.is_adaptive()
                            ? solve_anid(g, a, nid, c.tv_config(), c.schedule_object(), c.ls, c.stop, f0)
                            : solve_nid(g, a, nid, c.ls, c.stop, f0);
    out.image = std::move(res.f);
    out.trace = std::move(res.trace);
    return out;
}

// ---------------------------------------------------------------------------
// Output helpers

inline std::string manifest_text(const ExperimentConfig& c, const std::string& command)
{
    std::ostringstream os;
    os << "# nidrecon " << version << " manifest: " << command << "\n";
    os << "# fftw " << fftw_version << "\n";
    os << "# libpng " << PNG_LIBPNG_VER_STRING << "\n";
#ifdef __VERSION__
    os << "# compiler " << __VERSION__ << "\n";
#endif
    os << "# rerun: nidrecon " << command << " --config <this file>\n\n";
    os << c.resolved.to_toml();
    return os.str();
}

inline std::filesystem::path write_manifest(const ExperimentConfig& c, const std::string& command)
{
    const auto path = std::filesystem::path(c.out_dir) / (command + ".manifest.toml");
    write_text(path, manifest_text(c, command));
    return path;
}

inline void write_image_set(const ExperimentConfig& c, const std::string& stem, const Image& f)
{
    const std::filesystem::path dir(c.out_dir);
    write_pgm16(dir / (stem + ".pgm"), f);
    write_image_binary(dir / (stem + ".img"), f);
    if (c.png) write_png(dir / (stem + ".png"), f);
}

inline std::string format_metric(double v) { return std::isinf(v) && v > 0 ? "exact" : format_double(v); }

inline std::string metrics_block(const std::string& label, const QualityReport& r, double peak)
{
    return "label = " + label + "\nsnr_db = " + format_metric(r.snr) + "\npsnr_db = " + format_metric(r.psnr) +
           "\nssim = " + format_metric(r.ssim) + "\npsnr_peak = " + format_double(peak) +
           "\nssim_window = gaussian 11x11 sigma 1.5, K1 0.01, K2 0.03, range max-min of reference\n";
}

inline std::string metrics_csv(const std::string& label, const QualityReport& r)
{
    return "label,snr,psnr,ssim\n" + label + "," + format_metric(r.snr) + "," + format_metric(r.psnr) + "," +
           format_metric(r.ssim) + "\n";
}

inline void write_metrics(const ExperimentConfig& c, const std::string& stem, const std::string& label,
                          const Image& ref, const Image& test)
{
    const auto r = assess(ref, test);
    const double peak = *std::max_element(ref.data().begin(), ref.data().end());
    const std::filesystem::path dir(c.out_dir);
    write_text(dir / (stem + "_metrics.txt"), metrics_block(label, r, peak));
    write_text(dir / (stem + "_metrics.csv"), metrics_csv(label, r));
}

// ---------------------------------------------------------------------------
// Pipelines

inline void cmd_phantom(const ExperimentConfig& c)
{
    write_manifest(c, "phantom");
    write_image_set(c, "phantom", shepp_logan_phantom(c.grid(), c.table));
}

struct SimulationSummary {
    double realized_snr_db;
};

inline SimulationSummary cmd_simulate(const ExperimentConfig& c)
{
    write_manifest(c, "simulate");
    const Image phantom = shepp_logan_phantom(c.grid(), c.table);
    const auto a = build_projection_matrix(c.grid(), c.geometry());
    const Sinogram clean = forward_project(a, phantom);
    const Sinogram noisy = add_noise(clean, c.noise);
    const std::filesystem::path dir(c.out_dir);
    write_sinogram_csv(dir / "sinogram_clean.csv", clean);
    write_sinogram_binary(dir / "sinogram_clean.sino", clean);
    write_sinogram_csv(dir / "sinogram_noisy.csv", noisy);
    write_sinogram_binary(dir / "sinogram_noisy.sino", noisy);
    const double realized = std::isinf(c.noise.snr_db) ? c.noise.snr_db : snr(clean, noisy);
    write_text(dir / "sinogram_noise.txt", "target_snr_db = " + format_double(c.noise.snr_db) +
                                               "\nrealized_snr_db = " + format_metric(realized) +
                                               "\nseed = " + std::to_string(c.noise.seed) + "\n");
    return {realized};
}

struct ReconstructionSummary {
    QualityReport quality;
    std::vector<int> variation_violations;
};

/// Writes <method>.{pgm,img,png}, <method>_trace.csv, <method>_metrics.{txt,csv}.
/// On a line-search failure the partial trace is written before rethrowing.
inline ReconstructionSummary cmd_reconstruct(const ExperimentConfig& c)
{
    write_manifest(c, "reconstruct");
    const Scenario s = make_scenario(c);
    const std::filesystem::path dir(c.out_dir);
    const std::string stem = c.method;
    Reconstruction rec;
    try {
        rec = reconstruct(c, s);
    } catch (const LineSearchError& e) {
        std::ostringstream os;
        e.trace.write_csv(os);
        write_text(dir / (stem + "_trace.csv"), os.str());
        throw;
    }
    write_image_set(c, stem, rec.image);
    ReconstructionSummary summary{assess(s.phantom, rec.image), {}};
    if (rec.trace) {
        std::ostringstream os;
        rec.trace->write_csv(os);
        write_text(dir / (stem + "_trace.csv"), os.str());
        if (c.is_adaptive()) summary.variation_violations = rec.trace->variation_violations(c.anid_warmup);
    }
    if (!rec.pattern.slope.empty()) write_pattern_csv(dir / "nid3_pattern.csv", rec.pattern);
    write_metrics(c, stem, c.method, s.phantom, rec.image);
    return summary;
}

/// Compares metrics.test against metrics.reference (IMAG files); without a
/// reference the phantom of the configured grid is used.
inline QualityReport cmd_metrics(const ExperimentConfig& c)
{
    if (c.metrics_test.empty()) throw ConfigError("metrics.test must name an image file");
    write_manifest(c, "metrics");
    const Image test = read_image_binary(c.metrics_test);
    const Image ref =
        c.metrics_reference.empty() ? shepp_logan_phantom(test.grid(), c.table) : read_image_binary(c.metrics_reference);
    if (!(ref.grid() == test.grid())) throw DimensionError("metrics: reference and test sizes differ");
    const auto label = std::filesystem::path(c.metrics_test).stem().string();
    write_metrics(c, "comparison", label, ref, test);
    return assess(ref, test);
}

/// Tabulates psi and psi' of the configured families to flux.csv and draws
/// the normalized flux psi / max(psi) to flux.png.
inline void cmd_plot_flux(const ExperimentConfig& c)
{
    write_manifest(c, "plot-flux");
    const Image phantom = shepp_logan_phantom(c.grid(), c.table);
    const auto thresholds = diffusion_thresholds(c, phantom);
    std::vector<std::pair<std::string, PenaltyFamily>> fams;
    double s_hint = thresholds.front();
    for (const auto& name : c.plot_families) {
        if (name == "av") {
            fams.emplace_back(name, PenaltyFamily(AcarVogel{c.tv_epsilon}));
        } else if (name == "pm1") {
            fams.emplace_back(name, PenaltyFamily(PeronaMalik1{thresholds.front()}));
        } else if (name == "pm2") {
            fams.emplace_back(name, PenaltyFamily(PeronaMalik2{thresholds.front()}));
        } else if (name == "nid1" || name == "nid2" || name == "nid3") {
            FluxPattern pat;
            fams.emplace_back(name, nid_family(name, c, thresholds, &pat));
            const int count = name == "nid1" ? c.nid1_count : (name == "nid2" ? c.nid2_count : c.nid3_count);
            s_hint = std::max(s_hint, thresholds[count - 1]);
            if (name == "nid3") write_pattern_csv(std::filesystem::path(c.out_dir) / "nid3_pattern.csv", pat);
        } else {
            throw ConfigError("unknown plot family '" + name + "'");
        }
    }
    const double s_max = c.plot_s_max > 0.0 ? c.plot_s_max : 4.0 * s_hint;

    std::vector<double> s(c.plot_samples);
    for (int i = 0; i < c.plot_samples; ++i) s[i] = s_max * i / (c.plot_samples - 1);
    std::string csv = "s";
    for (const auto& [name, fam] : fams) csv += ",psi_" + name + ",dpsi_" + name;
    csv += "\n";
    std::vector<PlotSeries> series;
    std::vector<std::vector<double>> psi(fams.size()), dpsi(fams.size());
    for (std::size_t k = 0; k < fams.size(); ++k)
        for (double x : s) {
            psi[k].push_back(fams[k].second.flux(x));
            dpsi[k].push_back(fams[k].second.flux_derivative(x));
        }
    for (int i = 0; i < c.plot_samples; ++i) {
        csv += format_double(s[i]);
        for (std::size_t k = 0; k < fams.size(); ++k) csv += "," + format_double(psi[k][i]) + "," + format_double(dpsi[k][i]);
        csv += "\n";
    }
    write_text(std::filesystem::path(c.out_dir) / "flux.csv", csv);
    if (c.png) {
        for (std::size_t k = 0; k < fams.size(); ++k) {
            const double peak = *std::max_element(psi[k].begin(), psi[k].end());
            PlotSeries ps{s, psi[k]};
            if (peak > 0.0)
                for (double& y : ps.y) y /= peak;
            series.push_back(std::move(ps));
        }
        render_line_plot(series).write_png(std::filesystem::path(c.out_dir) / "flux.png");
    }
}

} // namespace nidrecon

#endif
