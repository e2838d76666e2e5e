#include "curvlab/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace curvlab {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::string lower(std::string_view s) {
    std::string out(s);
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

[[noreturn]] void fail(std::size_t line, const std::string& message) {
    throw ConfigError("line " + std::to_string(line) + ": " + message);
}

std::uint64_t parse_unsigned(std::string_view v, std::size_t line, std::string_view key) {
    std::uint64_t out = 0;
    const auto* end = v.data() + v.size();
    const auto [ptr, ec] = std::from_chars(v.data(), end, out);
    if (v.empty() || ec != std::errc() || ptr != end) {
        fail(line, "key '" + std::string(key) + "' expects a nonnegative integer, got '" +
                       std::string(v) + "'");
    }
    return out;
}

double parse_double(std::string_view v, std::size_t line, std::string_view key) {
    double out = 0.0;
    const auto* end = v.data() + v.size();
    const auto [ptr, ec] = std::from_chars(v.data(), end, out);
    if (v.empty() || ec != std::errc() || ptr != end || !std::isfinite(out)) {
        fail(line, "key '" + std::string(key) + "' expects a number, got '" + std::string(v) + "'");
    }
    return out;
}

bool parse_bool(std::string_view v, std::size_t line, std::string_view key) {
    const std::string s = lower(v);
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    fail(line, "key '" + std::string(key) + "' expects true or false, got '" + std::string(v) + "'");
}

std::vector<std::string> split_list(std::string_view v) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= v.size()) {
        const std::size_t comma = v.find(',', start);
        const std::size_t stop = comma == std::string_view::npos ? v.size() : comma;
        const auto item = trim(v.substr(start, stop - start));
        if (!item.empty()) out.emplace_back(item);
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

template <typename F>
auto wrap(F&& f, std::size_t line) {
    try {
        return f();
    } catch (const std::invalid_argument& e) {
        fail(line, e.what());
    }
}

using Setter = std::function<void(ExperimentConfig&, std::string_view, std::size_t)>;

const std::map<std::string, Setter, std::less<>>& setters() {
    static const std::map<std::string, Setter, std::less<>> table = {
        {"dataset",
         [](ExperimentConfig& c, std::string_view v, std::size_t line) {
             const auto s = lower(v);
             if (s == "synthetic") c.dataset = DatasetSource::synthetic;
             else if (s == "idx" || s == "mnist") c.dataset = DatasetSource::idx;
             else fail(line, "dataset must be 'synthetic' or 'idx', got '" + std::string(v) + "'");
         }},
        {"images_path", [](ExperimentConfig& c, std::string_view v, std::size_t) { c.images_path = std::string(v); }},
        {"labels_path", [](ExperimentConfig& c, std::string_view v, std::size_t) { c.labels_path = std::string(v); }},
        {"synthetic_classes",
         [](ExperimentConfig& c, std::string_view v, std::size_t line) {
             c.synthetic_classes = static_cast<int>(parse_unsigned(v, line, "synthetic_classes"));
         }},
        {"synthetic_per_class",
         [](ExperimentConfig& c, std::string_view v, std::size_t line) {
             c.synthetic_per_class = parse_unsigned(v, line, "synthetic_per_class");
         }},
        {"synthetic_dim",
         [](ExperimentConfig& c, std::string_view v, std::size_t line) {
             c.synthetic_dim = parse_unsigned(v, line, "synthetic_dim");
         }},
        {"data_seed",
         [](ExperimentConfig& c, std::string_view v, std::size_t line) {
             c.data_seed = parse_unsigned(v, line, "data_seed");
         }},
        {"subset_size",
         [](ExperimentConfig& c, std::string_view v, std::size_t line) {
             c.subset_size = parse_unsigned(v, line, "subset_size");
         }},
        {"projection_dim",
         [](ExperimentConfig& c, std::string_view v, std::size_t line) {
             c.projection_dim = parse_unsigned(v, line, "projection_dim");
         }},
        {"stream",
         [](ExperimentConfig& c, std::string_view v, std::size_t line) {
             c.stream = wrap([&] { return parse_stream_kind(v); }, line);
         }},
        {"num_tasks",
         [](ExperimentConfig& c, std::string_view v, std::size_t line) {
             c.num_tasks = parse_unsigned(v, line, "num_tasks");
         }},
        {"epochs_per_task",
         [](ExperimentConfig& c, std::string_view v, std::size_t line) {
             c.epochs_per_task = parse_unsigned(v, line, "epochs_per_task");
         }},
        {"batch_size",
         [](ExperimentConfig& c, std::string_view v, std::size_t line) {
             c.batch_size = parse_unsigned(v, line, "batch_size");
         }},
        {"hidden_widths",
         [](ExperimentConfig& c, std::string_view v, std::size_t line) {
             c.hidden_widths.clear();
             for (const auto& item : split_list(v)) {
                 const auto w = parse_unsigned(item, line, "hidden_widths");
                 if (w == 0) fail(line, "hidden_widths entries must be positive");
                 c.hidden_widths.push_back(w);
             }
         }},
        {"activation",
         [](ExperimentConfig& c, std::string_view v, std::size_t line) {
             c.activation = wrap([&] { return parse_activation(v); }, line);
         }},
        {"lr", [](ExperimentConfig& c, std::string_view v, std::size_t line) { c.adam.lr = parse_double(v, line, "lr"); }},
        {"beta1", [](ExperimentConfig& c, std::string_view v, std::size_t line) { c.adam.beta1 = parse_double(v, line, "beta1"); }},
        {"beta2", [](ExperimentConfig& c, std::string_view v, std::size_t line) { c.adam.beta2 = parse_double(v, line, "beta2"); }},
        {"eps", [](ExperimentConfig& c, std::string_view v, std::size_t line) { c.adam.eps = parse_double(v, line, "eps"); }},
        {"reset_adam",
         [](ExperimentConfig& c, std::string_view v, std::size_t line) {
             c.reset_adam = parse_bool(v, line, "reset_adam");
         }},
        {"regularizer",
         [](ExperimentConfig& c, std::string_view v, std::size_t line) {
             c.regularizer.kind = wrap([&] { return parse_regularizer(v); }, line);
         }},
        {"strength",
         [](ExperimentConfig& c, std::string_view v, std::size_t line) {
             c.regularizer.strength = parse_double(v, line, "strength");
             if (c.regularizer.strength < 0.0) fail(line, "strength must be nonnegative");
         }},
        {"seed", [](ExperimentConfig& c, std::string_view v, std::size_t line) { c.seed = parse_unsigned(v, line, "seed"); }},
        {"probe_batch",
         [](ExperimentConfig& c, std::string_view v, std::size_t line) {
             c.probe_batch = parse_unsigned(v, line, "probe_batch");
         }},
        {"oracles",
         [](ExperimentConfig& c, std::string_view v, std::size_t line) {
             c.oracles = {};
             for (const auto& item : split_list(v)) {
                 const auto s = lower(item);
                 if (s == "fisher") c.oracles.fisher = true;
                 else if (s == "gauss_newton" || s == "gauss-newton") c.oracles.gauss_newton = true;
                 else if (s == "exact") c.oracles.exact = true;
                 else if (s != "none") fail(line, "unknown oracle '" + item + "'");
             }
         }},
        {"output", [](ExperimentConfig& c, std::string_view v, std::size_t) { c.output = std::string(v); }},
        {"checkpoint_path",
         [](ExperimentConfig& c, std::string_view v, std::size_t) { c.checkpoint_path = std::string(v); }},
        {"resume",
         [](ExperimentConfig& c, std::string_view v, std::size_t line) { c.resume = parse_bool(v, line, "resume"); }},
    };
    return table;
}

}  // namespace

void ExperimentConfig::validate() const {
    auto require = [](bool ok, const std::string& message) {
        if (!ok) throw ConfigError(message);
    };
    if (dataset == DatasetSource::idx) {
        require(!images_path.empty() && !labels_path.empty(),
                "dataset = idx requires images_path and labels_path");
    } else {
        require(synthetic_classes >= 2, "synthetic_classes must be at least 2");
        require(synthetic_per_class > 0, "synthetic_per_class must be positive");
        require(synthetic_dim > 0, "synthetic_dim must be positive");
    }
    require(num_tasks > 0, "num_tasks must be positive");
    require(epochs_per_task > 0, "epochs_per_task must be positive");
    require(batch_size > 0, "batch_size must be positive");
    require(probe_batch > 0, "probe_batch must be positive");
    require(adam.lr > 0.0, "lr must be positive");
    require(adam.beta1 >= 0.0 && adam.beta1 < 1.0, "beta1 must be in [0, 1)");
    require(adam.beta2 >= 0.0 && adam.beta2 < 1.0, "beta2 must be in [0, 1)");
    require(adam.eps > 0.0, "eps must be positive");
    require(!(resume && checkpoint_path.empty()), "resume requires checkpoint_path");
    try {
        regularizer.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
}

ExperimentConfig parse_config(std::string_view text) {
    ExperimentConfig config;
    std::set<std::string, std::less<>> seen;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t nl = text.find('\n', pos);
        std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;

        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;

        const auto eq = line.find('=');
        if (eq == std::string_view::npos) fail(line_no, "expected 'key = value'");
        const std::string key = lower(trim(line.substr(0, eq)));
        const std::string_view value = trim(line.substr(eq + 1));
        const auto it = setters().find(key);
        if (it == setters().end()) fail(line_no, "unknown key '" + key + "'");
        if (!seen.insert(key).second) fail(line_no, "duplicate key '" + key + "'");
        it->second(config, value, line_no);
    }
    for (const char* key : {"dataset", "activation", "stream"}) {
        if (!seen.contains(key)) throw ConfigError(std::string("missing required key '") + key + "'");
    }
    config.validate();
    return config;
}

ExperimentConfig parse_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    try {
        return parse_config(buffer.str());
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

std::string to_config_text(const ExperimentConfig& c) {
    auto num = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    std::ostringstream out;
    out << "dataset = " << (c.dataset == DatasetSource::idx ? "idx" : "synthetic") << '\n';
    if (!c.images_path.empty()) out << "images_path = " << c.images_path.string() << '\n';
    if (!c.labels_path.empty()) out << "labels_path = " << c.labels_path.string() << '\n';
    out << "synthetic_classes = " << c.synthetic_classes << '\n'
        << "synthetic_per_class = " << c.synthetic_per_class << '\n'
        << "synthetic_dim = " << c.synthetic_dim << '\n'
        << "data_seed = " << c.data_seed << '\n'
        << "subset_size = " << c.subset_size << '\n'
        << "projection_dim = " << c.projection_dim << '\n'
        << "stream = " << to_string(c.stream) << '\n'
        << "num_tasks = " << c.num_tasks << '\n'
        << "epochs_per_task = " << c.epochs_per_task << '\n'
        << "batch_size = " << c.batch_size << '\n'
        << "hidden_widths = ";
    for (std::size_t i = 0; i < c.hidden_widths.size(); ++i) out << (i ? "," : "") << c.hidden_widths[i];
    out << '\n'
        << "activation = " << to_string(c.activation) << '\n'
        << "lr = " << num(c.adam.lr) << '\n'
        << "beta1 = " << num(c.adam.beta1) << '\n'
        << "beta2 = " << num(c.adam.beta2) << '\n'
        << "eps = " << num(c.adam.eps) << '\n'
        << "reset_adam = " << (c.reset_adam ? "true" : "false") << '\n'
        << "regularizer = " << to_string(c.regularizer.kind) << '\n'
        << "strength = " << num(c.regularizer.strength) << '\n'
        << "seed = " << c.seed << '\n'
        << "probe_batch = " << c.probe_batch << '\n'
        << "oracles = ";
    std::vector<std::string> oracles;
    if (c.oracles.fisher) oracles.emplace_back("fisher");
    if (c.oracles.gauss_newton) oracles.emplace_back("gauss_newton");
    if (c.oracles.exact) oracles.emplace_back("exact");
    for (std::size_t i = 0; i < oracles.size(); ++i) out << (i ? "," : "") << oracles[i];
    out << '\n' << "output = " << c.output.string() << '\n';
    if (!c.checkpoint_path.empty()) out << "checkpoint_path = " << c.checkpoint_path.string() << '\n';
    out << "resume = " << (c.resume ? "true" : "false") << '\n';
    return out.str();
}

}  // namespace curvlab
