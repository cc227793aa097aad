#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include <json.hpp>

#include "mfill/core.hpp"
#include "mfill/engine.hpp"
#include "mfill/models.hpp"
#include "mfill/oracle.hpp"
#include "mfill/transport.hpp"

namespace mfill {

inline constexpr const char* kLibraryVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Locale-independent number formatting (17 significant digits, '.' decimal
// separator, LF line endings).
// ---------------------------------------------------------------------------

inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
    double v = 0.0;
    const char* begin = s.data();
    const char* end = s.data() + s.size();
    while (begin != end && (*begin == ' ' || *begin == '\t')) ++begin;
    const auto res = std::from_chars(begin, end, v);
    if (res.ec != std::errc{})
        throw Error("parse: not a decimal number: '" + std::string(s) + "'");
    return v;
}

// ---------------------------------------------------------------------------
// Sample/diagnostics CSV files
// ---------------------------------------------------------------------------

struct SampleTable {
    std::vector<std::size_t> iterations;
    Matrix params;  // x columns
    Matrix images;  // y columns
    std::vector<double> weights;
};

inline void write_samples_csv(const std::filesystem::path& path, const Matrix& params,
                              const Matrix& images, std::span<const double> weights,
                              std::size_t iteration) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("io: cannot open " + path.string() + " for writing");
    out << "iteration,index";
    for (std::size_t c = 0; c < params.cols(); ++c) out << ",x_" << (c + 1);
    for (std::size_t c = 0; c < images.cols(); ++c) out << ",y_" << (c + 1);
    out << ",weight\n";
    for (std::size_t i = 0; i < params.rows(); ++i) {
        out << iteration << ',' << i;
        for (std::size_t c = 0; c < params.cols(); ++c) out << ',' << format_double(params(i, c));
        for (std::size_t c = 0; c < images.cols(); ++c) out << ',' << format_double(images(i, c));
        out << ',' << format_double(weights.empty() ? 0.0 : weights[i]) << '\n';
    }
    if (!out) throw Error("io: write failed for " + path.string());
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return fields;
}

inline SampleTable read_samples_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("io: cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw Error("io: empty file " + path.string());
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = split_csv_line(line);
    std::vector<std::size_t> x_cols, y_cols;
    std::optional<std::size_t> weight_col, iter_col;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (header[c].rfind("x_", 0) == 0) x_cols.push_back(c);
        else if (header[c].rfind("y_", 0) == 0) y_cols.push_back(c);
        else if (header[c] == "weight") weight_col = c;
        else if (header[c] == "iteration") iter_col = c;
    }
    if (y_cols.empty()) throw Error("io: no y_* columns in " + path.string());

    std::vector<std::vector<std::string>> rows;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        rows.push_back(split_csv_line(line));
        if (rows.back().size() != header.size())
            throw Error("io: ragged CSV row in " + path.string());
    }
    SampleTable table;
    table.params = Matrix(rows.size(), x_cols.size());
    table.images = Matrix(rows.size(), y_cols.size());
    table.weights.resize(rows.size());
    table.iterations.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t c = 0; c < x_cols.size(); ++c)
            table.params(i, c) = parse_double(rows[i][x_cols[c]]);
        for (std::size_t c = 0; c < y_cols.size(); ++c)
            table.images(i, c) = parse_double(rows[i][y_cols[c]]);
        table.weights[i] = weight_col ? parse_double(rows[i][*weight_col]) : 0.0;
        table.iterations[i] =
            iter_col ? static_cast<std::size_t>(parse_double(rows[i][*iter_col])) : 0;
    }
    return table;
}

inline void write_diagnostics_csv(const std::filesystem::path& path, const Diagnostics& diag) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("io: cannot open " + path.string() + " for writing");
    out << "iteration,w1_successive,ess,min_weight,max_weight,f_evals\n";
    for (const auto& rec : diag.records) {
        out << rec.iteration << ',' << format_double(rec.w1_successive) << ','
            << format_double(rec.ess) << ',' << format_double(rec.min_weight) << ','
            << format_double(rec.max_weight) << ',' << rec.f_evaluations << '\n';
    }
}

// ---------------------------------------------------------------------------
// External model protocol: one process invocation per evaluation batch;
// m decimals per input line on stdin, n decimals per output line on stdout.
// ---------------------------------------------------------------------------

class ExternalModel {
public:
    ExternalModel(std::string command, std::size_t dim_in, std::size_t dim_out)
        : command_(std::move(command)), dim_in_(dim_in), dim_out_(dim_out) {
        if (dim_in_ == 0 || dim_out_ == 0)
            throw ConfigError("external model: dimensions must be positive");
    }

    Matrix eval_batch(const Matrix& points) const {
        if (points.cols() != dim_in_)
            throw SizeMismatch("external model: input dimension mismatch");
        std::string input;
        input.reserve(points.rows() * dim_in_ * 24);
        for (std::size_t i = 0; i < points.rows(); ++i) {
            for (std::size_t c = 0; c < dim_in_; ++c) {
                if (c) input += ' ';
                input += format_double(points(i, c));
            }
            input += '\n';
        }
        const std::string output = run_process(input);
        return parse_output(output, points.rows());
    }

    ModelSpec spec(bool fd_fallback, bool has_box = false) const {
        (void)has_box;
        ModelSpec s;
        s.dim_in = dim_in_;
        s.dim_out = dim_out_;
        s.fd_fallback = fd_fallback;
        s.reentrant = false;  // the engine must not spawn overlapping invocations
        auto self = std::make_shared<ExternalModel>(*this);
        s.eval = [self](std::span<const double> x) {
            Matrix one(1, self->dim_in_);
            std::copy(x.begin(), x.end(), one.row(0).begin());
            const Matrix y = self->eval_batch(one);
            return std::vector<double>(y.row(0).begin(), y.row(0).end());
        };
        s.eval_batch = [self](const Matrix& pts) { return self->eval_batch(pts); };
        return s;
    }

    const std::string& command() const { return command_; }

private:
    std::string run_process(const std::string& input) const {
        int to_child[2], from_child[2];
        if (pipe(to_child) != 0 || pipe(from_child) != 0)
            throw Error("external model: pipe creation failed");
        const pid_t pid = fork();
        if (pid < 0) throw Error("external model: fork failed");
        if (pid == 0) {
            dup2(to_child[0], STDIN_FILENO);
            dup2(from_child[1], STDOUT_FILENO);
            close(to_child[0]);
            close(to_child[1]);
            close(from_child[0]);
            close(from_child[1]);
            execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
            _exit(127);
        }
        close(to_child[0]);
        close(from_child[1]);

        // write on a helper thread so a streaming child cannot deadlock on
        // full pipes
        std::thread writer([fd = to_child[1], &input] {
            std::size_t off = 0;
            while (off < input.size()) {
                const ssize_t n = ::write(fd, input.data() + off, input.size() - off);
                if (n <= 0) break;
                off += static_cast<std::size_t>(n);
            }
            close(fd);
        });

        std::string output;
        char buf[4096];
        while (true) {
            const ssize_t n = ::read(from_child[0], buf, sizeof(buf));
            if (n <= 0) break;
            output.append(buf, static_cast<std::size_t>(n));
        }
        close(from_child[0]);
        writer.join();
        int status = 0;
        waitpid(pid, &status, 0);
        if (!WIFEXITED(status) || WEXITSTATUS(status) != 0)
            throw Error("external model: process '" + command_ + "' failed");
        return output;
    }

    Matrix parse_output(const std::string& output, std::size_t expected_rows) const {
        Matrix result(expected_rows, dim_out_);
        std::size_t row = 0, pos = 0;
        while (row < expected_rows) {
            const std::size_t eol = output.find('\n', pos);
            std::string_view line(output.data() + pos,
                                  (eol == std::string::npos ? output.size() : eol) - pos);
            if (eol == std::string::npos && line.empty())
                throw Error("external model: output ended after " + std::to_string(row) +
                            " of " + std::to_string(expected_rows) + " lines");
            std::size_t field_start = 0;
            for (std::size_t c = 0; c < dim_out_; ++c) {
                while (field_start < line.size() &&
                       (line[field_start] == ' ' || line[field_start] == '\t'))
                    ++field_start;
                std::size_t field_end = field_start;
                while (field_end < line.size() && line[field_end] != ' ' &&
                       line[field_end] != '\t')
                    ++field_end;
                if (field_start == field_end)
                    throw Error("external model: short or non-numeric output line: '" +
                                std::string(line) + "'");
                double v = 0.0;
                const auto res =
                    std::from_chars(line.data() + field_start, line.data() + field_end, v);
                if (res.ec != std::errc{} || res.ptr != line.data() + field_end)
                    throw Error("external model: short or non-numeric output line: '" +
                                std::string(line) + "'");
                result(row, c) = v;
                field_start = field_end;
            }
            ++row;
            if (eol == std::string::npos) {
                if (row < expected_rows)
                    throw Error("external model: output ended after " + std::to_string(row) +
                                " of " + std::to_string(expected_rows) + " lines");
                break;
            }
            pos = eol + 1;
        }
        return result;
    }

    std::string command_;
    std::size_t dim_in_, dim_out_;
};

// ---------------------------------------------------------------------------
// Experiment configuration (single JSON document, flat keys per section)
// ---------------------------------------------------------------------------

struct ExperimentSetup {
    ModelSpec model;
    std::optional<ParamBox> box;
    TargetDensity target;
    RunConfig run;
    nlohmann::json resolved;         // echoed into the manifest
    nlohmann::json model_constants;  // fixed constants behind the model
};

namespace detail {

inline const nlohmann::json& require_key(const nlohmann::json& j, const std::string& key,
                                         const std::string& section) {
    if (!j.contains(key))
        throw ConfigError("config: missing required key '" + key + "' in section '" + section +
                          "'");
    return j.at(key);
}

inline double json_b_value(const nlohmann::json& j) {
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "inf" || s == "infinity") return std::numeric_limits<double>::infinity();
        throw ConfigError("config: key 'b' must be a number or \"inf\"");
    }
    return j.get<double>();
}

} // namespace detail

inline ExperimentSetup load_experiment(const nlohmann::json& j) {
    using nlohmann::json;
    ExperimentSetup setup;

    const json& model_j = detail::require_key(j, "model", "<root>");
    const auto type = detail::require_key(model_j, "type", "model").get<std::string>();
    json model_echo{{"type", type}};
    if (type == "torus") {
        const double big_r = model_j.value("R", 1.0);
        const double small_r = model_j.value("r", 0.9);
        TorusModel torus(big_r, small_r);
        setup.model = torus.spec();
        setup.box.emplace(torus.box());
        model_echo["R"] = big_r;
        model_echo["r"] = small_r;
        setup.model_constants = {{"R", big_r}, {"r", small_r}};
    } else if (type == "exponential" || type == "expo") {
        std::array<double, 3> t{1.0, 2.0, 4.0};
        if (model_j.contains("t")) {
            const auto vec = model_j.at("t").get<std::vector<double>>();
            if (vec.size() != 3) throw ConfigError("config: model key 't' must have 3 entries");
            std::copy(vec.begin(), vec.end(), t.begin());
        }
        ExponentialModel expo(t);
        setup.model = expo.spec();
        setup.box.emplace(expo.box());
        model_echo["t"] = t;
        setup.model_constants = {{"t", t}};
    } else if (type == "enzyme") {
        EnzymeModel enzyme;
        enzyme.input_base = model_j.value("I0", enzyme.input_base);
        enzyme.input_step = model_j.value("I1", enzyme.input_step);
        enzyme.feed_a = model_j.value("F_A", enzyme.feed_a);
        enzyme.feed_b = model_j.value("F_B", enzyme.feed_b);
        setup.model = enzyme.spec();
        setup.box.emplace(enzyme.box());
        model_echo["I0"] = enzyme.input_base;
        model_echo["I1"] = enzyme.input_step;
        model_echo["F_A"] = enzyme.feed_a;
        model_echo["F_B"] = enzyme.feed_b;
        setup.model_constants = {
            {"rate_constants",
             {{"kp_FAA", enzyme.kp_faa},
              {"kp_FBB", enzyme.kp_fbb},
              {"k_AC", enzyme.k_ac},
              {"kp_BC", enzyme.kp_bc},
              {"K_IA", enzyme.cap_k_ia},
              {"Kp_FAA", enzyme.cap_kp_faa},
              {"K_CB", enzyme.cap_k_cb},
              {"Kp_FBB", enzyme.cap_kp_fbb},
              {"K_AC", enzyme.cap_k_ac},
              {"Kp_BC", enzyme.cap_kp_bc}}},
            {"I0", enzyme.input_base},
            {"I1", enzyme.input_step},
            {"F_A", enzyme.feed_a},
            {"F_B", enzyme.feed_b},
            {"initial_state", {0.0, 0.0, 0.0}},
            {"integrator",
             {{"abs_tol", enzyme.integrator.abs_tol},
              {"rel_tol", enzyme.integrator.rel_tol},
              {"steady_tol", enzyme.steady_tol},
              {"steady_window", enzyme.steady_window},
              {"time_cap", enzyme.time_cap}}}};
    } else if (type == "external") {
        const auto command = detail::require_key(model_j, "command", "model").get<std::string>();
        const auto dim_in = detail::require_key(model_j, "dim_in", "model").get<std::size_t>();
        const auto dim_out = detail::require_key(model_j, "dim_out", "model").get<std::size_t>();
        const auto lower = detail::require_key(model_j, "lower", "model").get<std::vector<double>>();
        const auto upper = detail::require_key(model_j, "upper", "model").get<std::vector<double>>();
        if (lower.size() != dim_in || upper.size() != dim_in)
            throw ConfigError("config: external model bounds must match dim_in");
        const bool fd = model_j.value("fd_jacobian", false);
        ExternalModel ext(command, dim_in, dim_out);
        setup.model = ext.spec(fd);
        setup.box.emplace(ParamBox(lower, upper));
        model_echo["command"] = command;
        model_echo["dim_in"] = dim_in;
        model_echo["dim_out"] = dim_out;
        model_echo["lower"] = lower;
        model_echo["upper"] = upper;
        model_echo["fd_jacobian"] = fd;
        setup.model_constants = json::object();
    } else {
        throw ConfigError("config: unknown model type '" + type + "'");
    }

    // target section (optional; uniform by default)
    json target_echo{{"type", "uniform"}};
    if (j.contains("target")) {
        const json& target_j = j.at("target");
        const auto ttype = target_j.value("type", std::string("uniform"));
        if (ttype == "uniform") {
            setup.target.eval = [](std::span<const double>) { return 1.0; };
        } else if (ttype == "inverse_square_distance") {
            const auto point =
                detail::require_key(target_j, "point", "target").get<std::vector<double>>();
            setup.target.eval = [point](std::span<const double> y) {
                double d2 = 0.0;
                for (std::size_t c = 0; c < point.size() && c < y.size(); ++c) {
                    const double d = y[c] - point[c];
                    d2 += d * d;
                }
                return 1.0 / std::max(d2, 1e-300);
            };
            target_echo = {{"type", ttype}, {"point", point}};
        } else {
            throw ConfigError("config: unknown target type '" + ttype + "'");
        }
        target_echo["type"] = ttype;
    } else {
        setup.target.eval = [](std::span<const double>) { return 1.0; };
    }

    // run section
    const json& run_j = detail::require_key(j, "run", "<root>");
    RunConfig& cfg = setup.run;
    const auto alg = detail::require_key(run_j, "algorithm", "run").get<std::string>();
    if (alg == "jacobian")
        cfg.algorithm = AlgorithmKind::jacobian;
    else if (alg == "knn" || alg == "derivative_free")
        cfg.algorithm = AlgorithmKind::derivative_free;
    else
        throw ConfigError("config: algorithm must be 'jacobian' or 'knn'");
    cfg.sample_count = detail::require_key(run_j, "N", "run").get<std::size_t>();
    cfg.mix_uniform = detail::require_key(run_j, "q", "run").get<double>();
    cfg.bandwidth = detail::require_key(run_j, "h", "run").get<double>();
    cfg.max_iterations = detail::require_key(run_j, "max_iterations", "run").get<std::size_t>();
    cfg.seed = detail::require_key(run_j, "seed", "run").get<std::uint64_t>();
    cfg.stop_tol = run_j.value("stop_tol", 0.0);
    if (run_j.contains("b")) {
        cfg.truncation = detail::json_b_value(run_j.at("b"));
    } else if (cfg.algorithm == AlgorithmKind::derivative_free) {
        cfg.truncation = 1000.0 * cfg.mix_uniform / setup.box->volume();
    }  // jacobian: stays +inf (truncation is not used by that algorithm)
    cfg.neighbor_count = run_j.value("k", std::size_t{0});
    const auto kernel_name = run_j.value("kernel", std::string("biweight"));
    if (kernel_name == "biweight") cfg.kernel = KernelId::biweight;
    else if (kernel_name == "triweight") cfg.kernel = KernelId::triweight;
    else if (kernel_name == "tricube") cfg.kernel = KernelId::tricube;
    else throw ConfigError("config: unknown kernel '" + kernel_name + "'");

    validate_config(cfg, *setup.box);

    const std::size_t resolved_k = cfg.neighbor_count
                                       ? cfg.neighbor_count
                                       : default_neighbor_count(cfg.sample_count, setup.box->dim());
    json run_echo{{"algorithm", cfg.algorithm == AlgorithmKind::jacobian ? "jacobian" : "knn"},
                  {"N", cfg.sample_count},
                  {"q", cfg.mix_uniform},
                  {"h", cfg.bandwidth},
                  {"k", resolved_k},
                  {"max_iterations", cfg.max_iterations},
                  {"stop_tol", cfg.stop_tol},
                  {"seed", cfg.seed},
                  {"kernel", kernel_name}};
    if (std::isfinite(cfg.truncation))
        run_echo["b"] = cfg.truncation;
    else
        run_echo["b"] = "inf";

    setup.resolved = {{"model", model_echo}, {"target", target_echo}, {"run", run_echo}};
    return setup;
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

inline int cmd_run(const std::filesystem::path& config_path, const std::filesystem::path& out_dir,
                   std::optional<std::uint64_t> seed_override, int threads,
                   std::ostream& log = std::cout) {
    std::ifstream in(config_path);
    if (!in) throw ConfigError("config: cannot open '" + config_path.string() + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    ExperimentSetup setup = load_experiment(j);
    if (seed_override) {
        setup.run.seed = *seed_override;
        setup.resolved["run"]["seed"] = *seed_override;
    }

    std::filesystem::create_directories(out_dir);

    const auto result = run(
        setup.model, setup.target, *setup.box, setup.run, nullptr,
        [&log](const IterationRecord& rec) {
            log << "iteration " << rec.iteration << ": w1_successive="
                << format_double(rec.w1_successive) << " ess=" << format_double(rec.ess)
                << " f_evals=" << rec.f_evaluations << "\n";
        },
        threads);

    const std::size_t final_iteration = result.diagnostics.records.size();
    write_samples_csv(out_dir / "samples.csv", result.ensemble.points, result.ensemble.images,
                      result.ensemble.weights, final_iteration);
    write_diagnostics_csv(out_dir / "diagnostics.csv", result.diagnostics);

    nlohmann::json manifest{
        {"library", {{"name", "mfill"}, {"version", kLibraryVersion}}},
        {"command", "run"},
        {"config", setup.resolved},
        {"model_constants", setup.model_constants},
        {"seed", setup.run.seed},
        {"final_iteration", final_iteration},
        {"f_evaluations", result.diagnostics.records.empty()
                              ? 0
                              : result.diagnostics.records.back().f_evaluations},
        {"outputs", {{"samples", "samples.csv"}, {"diagnostics", "diagnostics.csv"}}}};
    std::ofstream mf(out_dir / "manifest.json", std::ios::binary);
    mf << manifest.dump(2) << '\n';
    if (!mf) throw Error("io: write failed for manifest.json");
    return 0;
}

inline int cmd_oracle(const std::string& model_name, std::size_t count, std::uint64_t seed,
                      const std::filesystem::path& out_path, double big_r = 1.0,
                      double small_r = 0.9, std::array<double, 3> times = {1.0, 2.0, 4.0},
                      int threads = 1) {
    OracleDraw draw;
    if (model_name == "torus_uniform") {
        draw = torus_uniform_oracle(TorusModel(big_r, small_r), count, seed, threads);
    } else if (model_name == "torus_nonuniform") {
        draw = torus_nonuniform_oracle(TorusModel(big_r, small_r), count, seed, threads);
    } else if (model_name == "expo" || model_name == "exponential") {
        draw = expo_oracle(ExponentialModel(times), count, seed, threads);
    } else {
        throw ConfigError("oracle: unknown model '" + model_name +
                          "' (torus_uniform | torus_nonuniform | expo)");
    }
    if (count == 0) {
        draw.params = Matrix(0, 2);
        draw.images = Matrix(0, 3);
    }
    std::vector<double> weights(count, count ? 1.0 / static_cast<double>(count) : 0.0);
    if (out_path.has_parent_path()) std::filesystem::create_directories(out_path.parent_path());
    write_samples_csv(out_path, draw.params, draw.images, weights, 0);
    return 0;
}

inline int cmd_w1(const std::filesystem::path& file_a, const std::filesystem::path& file_b,
                  GroundMetric metric, std::ostream& out = std::cout, int threads = 1) {
    const SampleTable a = read_samples_csv(file_a);
    const SampleTable b = read_samples_csv(file_b);
    if (a.images.rows() != b.images.rows() || a.images.cols() != b.images.cols())
        throw ConfigError("w1: sample files disagree in row count or output dimension");
    const double d = w1_exact(a.images, b.images, metric, threads);
    out << format_double(d) << '\n';
    return 0;
}

} // namespace mfill
