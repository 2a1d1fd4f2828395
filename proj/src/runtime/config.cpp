// SPDX-License-Identifier: Apache-2.0
#include "harmodop/runtime/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "harmodop/error.hpp"
#include "harmodop/rng.hpp"

namespace harmodop::runtime {

namespace {

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v)
{
    try {
        std::size_t used = 0;
        const double x = std::stod(v, &used);
        if (used == v.size()) {
            return x;
        }
    } catch (const std::logic_error&) {
    }
    throw ConfigError("config key '" + key + "': '" + v + "' is not a number");
}

std::uint64_t to_u64(const std::string& key, const std::string& v)
{
    try {
        std::size_t used = 0;
        if (!v.empty() && v[0] != '-') {
            const auto x = std::stoull(v, &used, 0);
            if (used == v.size()) {
                return x;
            }
        }
    } catch (const std::logic_error&) {
    }
    throw ConfigError("config key '" + key + "': '" + v + "' is not a non-negative integer");
}

std::size_t to_size(const std::string& key, const std::string& v)
{
    return static_cast<std::size_t>(to_u64(key, v));
}

bool to_bool(const std::string& key, const std::string& v)
{
    std::string s = v;
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    if (s == "1" || s == "true" || s == "yes" || s == "on") {
        return true;
    }
    if (s == "0" || s == "false" || s == "no" || s == "off") {
        return false;
    }
    throw ConfigError("config key '" + key + "': '" + v + "' is not a boolean");
}

std::optional<double> to_optional(const std::string& key, const std::string& v)
{
    if (v == "none" || v == "off" || v.empty()) {
        return std::nullopt;
    }
    return to_double(key, v);
}

std::vector<std::size_t> to_list(const std::string& key, const std::string& v)
{
    std::vector<std::size_t> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        out.push_back(to_size(key, trim(item)));
    }
    if (out.empty()) {
        throw ConfigError("config key '" + key + "' needs a comma-separated list");
    }
    return out;
}

using Setter = std::function<void(Settings&, const std::string& key, const std::string& value)>;

const std::map<std::string, Setter>& setters()
{
    static const std::map<std::string, Setter> table = [] {
        std::map<std::string, Setter> t;
        auto num = [&t](const std::string& k, auto member) {
            t[k] = [member](Settings& s, const std::string& key, const std::string& v) {
                member(s) = to_double(key, v);
            };
        };
        auto size = [&t](const std::string& k, auto member) {
            t[k] = [member](Settings& s, const std::string& key, const std::string& v) {
                member(s) = to_size(key, v);
            };
        };
        auto flag = [&t](const std::string& k, auto member) {
            t[k] = [member](Settings& s, const std::string& key, const std::string& v) {
                member(s) = to_bool(key, v);
            };
        };
        t["seed"] = [](Settings& s, const std::string& key, const std::string& v) { s.seed = to_u64(key, v); };

        num("radar.f1", [](Settings& s) -> double& { return s.plan.radar.f1; });
        num("radar.p_t1", [](Settings& s) -> double& { return s.plan.radar.p_t1; });
        num("radar.g_t1", [](Settings& s) -> double& { return s.plan.radar.g_t1; });
        num("radar.g_rn", [](Settings& s) -> double& { return s.plan.radar.g_rn; });
        num("radar.sample_rate", [](Settings& s) -> double& { return s.plan.radar.sample_rate; });
        num("radar.reference_range", [](Settings& s) -> double& { return s.plan.radar.reference_range; });
        num("radar.nominal_snr_db", [](Settings& s) -> double& { return s.plan.radar.nominal_snr_db; });
        num("radar.reference_amplitude", [](Settings& s) -> double& { return s.plan.radar.reference_amplitude; });
        flag("radar.constant_amplitude", [](Settings& s) -> bool& { return s.plan.radar.constant_amplitude; });
        t["radar.snr_override_db"] = [](Settings& s, const std::string& k, const std::string& v) {
            s.plan.radar.snr_override_db = to_optional(k, v);
        };
        t["radar.noise_floor"] = [](Settings& s, const std::string& k, const std::string& v) {
            s.plan.radar.noise_floor = to_optional(k, v);
        };
        t["radar.full_scale"] = [](Settings& s, const std::string& k, const std::string& v) {
            s.plan.radar.full_scale = to_optional(k, v);
        };

        num("tag.f_resonance", [](Settings& s) -> double& { return s.plan.tag.f_resonance; });
        num("tag.bandwidth", [](Settings& s) -> double& { return s.plan.tag.bandwidth; });
        num("tag.epsilon_n", [](Settings& s) -> double& { return s.plan.tag.epsilon_n; });
        num("tag.g_tag_1", [](Settings& s) -> double& { return s.plan.tag.g_tag_1; });
        num("tag.g_tag_n", [](Settings& s) -> double& { return s.plan.tag.g_tag_n; });
        t["tag.harmonic_n"] = [](Settings& s, const std::string& k, const std::string& v) {
            s.plan.tag.harmonic_n = static_cast<int>(to_u64(k, v));
        };

        num("impairments.iq_gain_imbalance", [](Settings& s) -> double& { return s.plan.impairments.iq_gain_imbalance; });
        num("impairments.iq_phase_error", [](Settings& s) -> double& { return s.plan.impairments.iq_phase_error; });
        num("impairments.dc_offset_i", [](Settings& s) -> double& { return s.plan.impairments.dc_offset_i; });
        num("impairments.dc_offset_q", [](Settings& s) -> double& { return s.plan.impairments.dc_offset_q; });
        num("impairments.drift_slope", [](Settings& s) -> double& { return s.plan.impairments.drift_slope; });

        num("dsp.iq_deadband", [](Settings& s) -> double& { return s.plan.chain.iq.deadband; });
        t["dsp.lpf_order"] = [](Settings& s, const std::string& k, const std::string& v) {
            s.plan.chain.lpf.order = static_cast<int>(to_u64(k, v));
        };
        num("dsp.lpf_cutoff", [](Settings& s) -> double& { return s.plan.chain.lpf.cutoff; });
        size("dsp.stft_window_len", [](Settings& s) -> std::size_t& { return s.plan.chain.stft.window_len; });
        size("dsp.stft_hop", [](Settings& s) -> std::size_t& { return s.plan.chain.stft.hop; });
        size("dsp.stft_fft_len", [](Settings& s) -> std::size_t& { return s.plan.chain.stft.fft_len; });
        t["dsp.stft_window"] = [](Settings& s, const std::string&, const std::string& v) {
            s.plan.chain.stft.window = dsp::taper_from_string(v);
        };
        num("dsp.range_db", [](Settings& s) -> double& { return s.plan.chain.range_db; });
        num("dsp.freq_span", [](Settings& s) -> double& { return s.plan.chain.freq_span; });
        t["dsp.binary_threshold"] = [](Settings& s, const std::string& k, const std::string& v) {
            s.plan.chain.binary_threshold = to_optional(k, v);
        };
        // One image size feeds the chain, the dataset and the network input.
        t["image_size"] = [](Settings& s, const std::string& k, const std::string& v) {
            const auto n = to_size(k, v);
            s.plan.image_size = n;
            s.plan.chain.image_size = n;
            s.network.input_size = n;
        };

        t["dataset.case"] = [](Settings& s, const std::string& k, const std::string& v) {
            s.plan.case_id = static_cast<int>(to_u64(k, v));
        };
        size("dataset.per_class_count", [](Settings& s) -> std::size_t& { return s.plan.per_class_count; });
        num("dataset.eval_fraction", [](Settings& s) -> double& { return s.plan.eval_fraction; });
        num("dataset.trained_share", [](Settings& s) -> double& { return s.plan.trained_share; });
        size("dataset.windows_per_trajectory",
             [](Settings& s) -> std::size_t& { return s.plan.windows_per_trajectory; });
        num("dataset.window_seconds", [](Settings& s) -> double& { return s.plan.window_seconds; });
        num("dataset.window_hop_seconds", [](Settings& s) -> double& { return s.plan.window_hop_seconds; });
        size("dataset.trained_subjects", [](Settings& s) -> std::size_t& { return s.plan.trained_subjects; });
        size("dataset.trained_eval_subjects",
             [](Settings& s) -> std::size_t& { return s.plan.trained_eval_subjects; });
        size("dataset.untrained_subjects", [](Settings& s) -> std::size_t& { return s.plan.untrained_subjects; });
        size("dataset.untrained_eval_subjects",
             [](Settings& s) -> std::size_t& { return s.plan.untrained_eval_subjects; });
        flag("dataset.tremor", [](Settings& s) -> bool& { return s.plan.tremor; });

        t["cnn.filters"] = [](Settings& s, const std::string& k, const std::string& v) {
            const auto kernel = s.network.conv_blocks.empty() ? 3 : s.network.conv_blocks.front().kernel;
            s.network.conv_blocks.clear();
            for (auto f : to_list(k, v)) {
                s.network.conv_blocks.push_back({f, kernel, cnn::Activation::relu});
            }
        };
        t["cnn.kernel"] = [](Settings& s, const std::string& k, const std::string& v) {
            const auto kernel = to_size(k, v);
            for (auto& b : s.network.conv_blocks) {
                b.kernel = kernel;
            }
        };
        size("cnn.pool_window", [](Settings& s) -> std::size_t& { return s.network.pool.window; });
        size("cnn.pool_stride", [](Settings& s) -> std::size_t& { return s.network.pool.stride; });
        num("cnn.dropout_rate", [](Settings& s) -> double& { return s.network.dropout_rate; });
        t["cnn.dense_widths"] = [](Settings& s, const std::string& k, const std::string& v) {
            s.network.dense_widths = to_list(k, v);
        };
        t["cnn.precision"] = [](Settings& s, const std::string&, const std::string& v) {
            s.network.precision = cnn::precision_from_string(v);
        };

        size("train.epochs", [](Settings& s) -> std::size_t& { return s.training.epochs; });
        size("train.batch_size", [](Settings& s) -> std::size_t& { return s.training.batch_size; });
        num("train.lr", [](Settings& s) -> double& { return s.training.lr; });
        num("train.beta1", [](Settings& s) -> double& { return s.training.beta1; });
        num("train.beta2", [](Settings& s) -> double& { return s.training.beta2; });
        num("train.epsilon", [](Settings& s) -> double& { return s.training.epsilon; });

        num("classify.hidden_threshold", [](Settings& s) -> double& { return s.hidden_threshold; });

        num("stream.window_seconds", [](Settings& s) -> double& { return s.stream.window_seconds; });
        num("stream.update_rate", [](Settings& s) -> double& { return s.stream.update_rate; });
        num("stream.latency_budget", [](Settings& s) -> double& { return s.stream.latency_budget; });
        flag("stream.threaded", [](Settings& s) -> bool& { return s.stream.threaded; });
        num("stream.speed", [](Settings& s) -> double& { return s.stream.speed; });
        size("stream.queue_capacity", [](Settings& s) -> std::size_t& { return s.stream.queue_capacity; });
        t["stream.policy"] = [](Settings& s, const std::string& k, const std::string& v) {
            if (v == "block") {
                s.stream.policy = QueuePolicy::block;
            } else if (v == "drop_oldest") {
                s.stream.policy = QueuePolicy::drop_oldest;
            } else {
                throw ConfigError("config key '" + k + "': expected block or drop_oldest");
            }
        };
        num("stream.chunk_seconds", [](Settings& s) -> double& { return s.stream.chunk_seconds; });
        t["stream.scenario"] = [](Settings& s, const std::string&, const std::string& v) {
            s.stream.scenario = parse_scenario(v);
        };
        size("stream.baseline_history", [](Settings& s) -> std::size_t& { return s.stream.baseline_history; });
        size("stream.baseline_update_every",
             [](Settings& s) -> std::size_t& { return s.stream.baseline_update_every; });
        num("stream.baseline_margin", [](Settings& s) -> double& { return s.stream.baseline_margin; });
        return t;
    }();
    return table;
}

}  // namespace

ConfigEntries parse_config(const std::string& text, const std::string& name)
{
    ConfigEntries out;
    std::stringstream ss(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(ss, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) {
            line.resize(hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(name + ":" + std::to_string(line_no) + ": expected 'key = value'");
        }
        auto key = trim(line.substr(0, eq));
        if (key.empty()) {
            throw ConfigError(name + ":" + std::to_string(line_no) + ": missing key");
        }
        out.emplace_back(std::move(key), trim(line.substr(eq + 1)));
    }
    return out;
}

ConfigEntries load_config_file(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot read config file '" + path.string() + "'");
    }
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str(), path.string());
}

void Settings::apply(const std::string& key, const std::string& value)
{
    const auto& table = setters();
    const auto it = table.find(key);
    if (it == table.end()) {
        throw UsageError("unknown config key '" + key + "'");
    }
    it->second(*this, key, value);
}

void Settings::apply(const ConfigEntries& entries)
{
    for (const auto& [k, v] : entries) {
        apply(k, v);
    }
}

dataset::DatasetPlan Settings::dataset_plan() const
{
    auto p = plan;
    p.seed = seed;
    p.chain.image_size = p.image_size;
    return p;
}

cnn::TrainOptions Settings::train_options() const
{
    auto t = training;
    t.seed = seed;
    t.hidden_threshold = hidden_threshold;
    return t;
}

StreamConfig Settings::stream_config() const
{
    auto s = stream;
    s.seed = seed;
    s.radar = plan.radar;
    s.tag = plan.tag;
    s.impairments = plan.impairments;
    s.chain = plan.chain;
    s.chain.image_size = plan.image_size;
    s.hidden_threshold = hidden_threshold;
    return s;
}

std::uint64_t Settings::init_seed() const
{
    return derive_seed({seed, 0x1417u});
}

std::vector<std::string> config_keys()
{
    std::vector<std::string> keys;
    for (const auto& [k, _] : setters()) {
        keys.push_back(k);
    }
    return keys;
}

}  // namespace harmodop::runtime
