// SPDX-License-Identifier: Apache-2.0
#include "harmodop/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "harmodop/binary_io.hpp"
#include "harmodop/error.hpp"
#include "harmodop/rng.hpp"

namespace harmodop::dataset {

using nlohmann::json;
using motion::Cohort;

namespace {

constexpr int kManifestVersion = 1;
constexpr const char* kManifestKind = "harmodop-manifest";

std::string hex32(std::uint32_t v)
{
    char buf[9];
    std::snprintf(buf, sizeof buf, "%08x", v);
    return buf;
}

template <typename T>
T value_or(const json& j, const char* key, T fallback)
{
    const auto it = j.find(key);
    return it == j.end() || it->is_null() ? fallback : it->get<T>();
}

json optional_json(const std::optional<double>& v)
{
    return v ? json(*v) : json(nullptr);
}

std::optional<double> optional_from(const json& j, const char* key)
{
    const auto it = j.find(key);
    if (it == j.end() || it->is_null()) {
        return std::nullopt;
    }
    return it->get<double>();
}

}  // namespace

std::string to_string(Split s)
{
    return s == Split::train ? "train" : "eval";
}

Split split_from_string(const std::string& s)
{
    if (s == "train") {
        return Split::train;
    }
    if (s == "eval") {
        return Split::eval;
    }
    throw FormatError("unknown split '" + s + "'");
}

void DatasetPlan::validate() const
{
    if (case_id < 1 || case_id > 3) {
        throw ConfigError("dataset case must be 1, 2 or 3 (got " + std::to_string(case_id) + ")");
    }
    if (per_class_count < 1) {
        throw ConfigError("per_class_count must be >= 1");
    }
    if (!(eval_fraction >= 0.0 && eval_fraction < 1.0)) {
        throw ConfigError("eval_fraction must lie in [0, 1)");
    }
    if (!(trained_share > 0.0 && trained_share < 1.0)) {
        throw ConfigError("trained_share must lie in (0, 1)");
    }
    if (image_size < 8) {
        throw ConfigError("image_size must be >= 8");
    }
    if (windows_per_trajectory < 1) {
        throw ConfigError("windows_per_trajectory must be >= 1");
    }
    if (!(window_seconds > 0.0) || !(window_hop_seconds > 0.0)) {
        throw ConfigError("window and hop durations must be > 0");
    }
    if (trained_eval_subjects < 1 || trained_eval_subjects >= trained_subjects || untrained_eval_subjects < 1 ||
        untrained_eval_subjects >= untrained_subjects) {
        throw ConfigError("each cohort needs at least one train and one eval subject");
    }
    if (eval_fraction > 0.0 && eval_per_class() == 0) {
        throw ConfigError("plan is infeasible: per_class_count too small for a non-empty eval split");
    }
    if (train_per_class() == 0) {
        throw ConfigError("plan is infeasible: no training entries per class");
    }
    channel::validate(radar);
    channel::validate(tag);
    channel::validate(impairments);
    dsp::validate(chain.stft);
}

std::size_t DatasetPlan::eval_per_class() const
{
    return static_cast<std::size_t>(std::llround(static_cast<double>(per_class_count) * eval_fraction));
}

std::size_t DatasetPlan::train_per_class() const
{
    return per_class_count - std::min(per_class_count, eval_per_class());
}

DatasetPlan full_scale_preset(int case_id)
{
    DatasetPlan plan;
    plan.case_id = case_id;
    std::size_t train_total = 0;
    switch (case_id) {
    case 1: train_total = 7002; break;
    case 2: train_total = 3120; break;
    case 3: train_total = 10122; break;
    default: throw ConfigError("dataset case must be 1, 2 or 3 (got " + std::to_string(case_id) + ")");
    }
    const double total = static_cast<double>(train_total) / (1.0 - kFullScaleEvalFraction);
    plan.per_class_count = static_cast<std::size_t>(std::llround(total / 4.0));
    plan.image_size = 300;
    return plan;
}

json plan_to_json(const DatasetPlan& p)
{
    const auto& r = p.radar;
    const auto& t = p.tag;
    const auto& m = p.impairments;
    const auto& c = p.chain;
    return json{
        {"case", p.case_id},
        {"per_class_count", p.per_class_count},
        {"eval_fraction", p.eval_fraction},
        {"trained_share", p.trained_share},
        {"image_size", p.image_size},
        {"seed", p.seed},
        {"windows_per_trajectory", p.windows_per_trajectory},
        {"window_seconds", p.window_seconds},
        {"window_hop_seconds", p.window_hop_seconds},
        {"trained_subjects", p.trained_subjects},
        {"trained_eval_subjects", p.trained_eval_subjects},
        {"untrained_subjects", p.untrained_subjects},
        {"untrained_eval_subjects", p.untrained_eval_subjects},
        {"tremor", p.tremor},
        {"radar",
         {{"f1", r.f1},
          {"p_t1", r.p_t1},
          {"g_t1", r.g_t1},
          {"g_rn", r.g_rn},
          {"sample_rate", r.sample_rate},
          {"snr_override_db", optional_json(r.snr_override_db)},
          {"noise_floor", optional_json(r.noise_floor)},
          {"full_scale", optional_json(r.full_scale)},
          {"reference_range", r.reference_range},
          {"nominal_snr_db", r.nominal_snr_db},
          {"reference_amplitude", r.reference_amplitude},
          {"constant_amplitude", r.constant_amplitude}}},
        {"tag",
         {{"f_resonance", t.f_resonance},
          {"bandwidth", t.bandwidth},
          {"epsilon_n", t.epsilon_n},
          {"g_tag_1", t.g_tag_1},
          {"g_tag_n", t.g_tag_n},
          {"harmonic_n", t.harmonic_n}}},
        {"impairments",
         {{"iq_gain_imbalance", m.iq_gain_imbalance},
          {"iq_phase_error", m.iq_phase_error},
          {"dc_offset_i", m.dc_offset_i},
          {"dc_offset_q", m.dc_offset_q},
          {"drift_slope", m.drift_slope}}},
        {"chain",
         {{"iq_deadband", c.iq.deadband},
          {"lpf_order", c.lpf.order},
          {"lpf_cutoff", c.lpf.cutoff},
          {"stft_window_len", c.stft.window_len},
          {"stft_hop", c.stft.hop},
          {"stft_fft_len", c.stft.fft_len},
          {"stft_window", dsp::to_string(c.stft.window)},
          {"range_db", c.range_db},
          {"freq_span", c.freq_span},
          {"binary_threshold", optional_json(c.binary_threshold)}}},
    };
}

DatasetPlan plan_from_json(const json& j)
{
    try {
        DatasetPlan p;
        p.case_id = j.at("case").get<int>();
        p.per_class_count = j.at("per_class_count").get<std::size_t>();
        p.eval_fraction = j.at("eval_fraction").get<double>();
        p.trained_share = value_or(j, "trained_share", p.trained_share);
        p.image_size = j.at("image_size").get<std::size_t>();
        p.seed = j.at("seed").get<std::uint64_t>();
        p.windows_per_trajectory = value_or(j, "windows_per_trajectory", p.windows_per_trajectory);
        p.window_seconds = value_or(j, "window_seconds", p.window_seconds);
        p.window_hop_seconds = value_or(j, "window_hop_seconds", p.window_hop_seconds);
        p.trained_subjects = value_or(j, "trained_subjects", p.trained_subjects);
        p.trained_eval_subjects = value_or(j, "trained_eval_subjects", p.trained_eval_subjects);
        p.untrained_subjects = value_or(j, "untrained_subjects", p.untrained_subjects);
        p.untrained_eval_subjects = value_or(j, "untrained_eval_subjects", p.untrained_eval_subjects);
        p.tremor = value_or(j, "tremor", p.tremor);
        if (const auto it = j.find("radar"); it != j.end()) {
            auto& r = p.radar;
            const json& x = *it;
            r.f1 = value_or(x, "f1", r.f1);
            r.p_t1 = value_or(x, "p_t1", r.p_t1);
            r.g_t1 = value_or(x, "g_t1", r.g_t1);
            r.g_rn = value_or(x, "g_rn", r.g_rn);
            r.sample_rate = value_or(x, "sample_rate", r.sample_rate);
            r.snr_override_db = optional_from(x, "snr_override_db");
            r.noise_floor = optional_from(x, "noise_floor");
            r.full_scale = optional_from(x, "full_scale");
            r.reference_range = value_or(x, "reference_range", r.reference_range);
            r.nominal_snr_db = value_or(x, "nominal_snr_db", r.nominal_snr_db);
            r.reference_amplitude = value_or(x, "reference_amplitude", r.reference_amplitude);
            r.constant_amplitude = value_or(x, "constant_amplitude", r.constant_amplitude);
        }
        if (const auto it = j.find("tag"); it != j.end()) {
            auto& t = p.tag;
            const json& x = *it;
            t.f_resonance = value_or(x, "f_resonance", t.f_resonance);
            t.bandwidth = value_or(x, "bandwidth", t.bandwidth);
            t.epsilon_n = value_or(x, "epsilon_n", t.epsilon_n);
            t.g_tag_1 = value_or(x, "g_tag_1", t.g_tag_1);
            t.g_tag_n = value_or(x, "g_tag_n", t.g_tag_n);
            t.harmonic_n = value_or(x, "harmonic_n", t.harmonic_n);
        }
        if (const auto it = j.find("impairments"); it != j.end()) {
            auto& m = p.impairments;
            const json& x = *it;
            m.iq_gain_imbalance = value_or(x, "iq_gain_imbalance", m.iq_gain_imbalance);
            m.iq_phase_error = value_or(x, "iq_phase_error", m.iq_phase_error);
            m.dc_offset_i = value_or(x, "dc_offset_i", m.dc_offset_i);
            m.dc_offset_q = value_or(x, "dc_offset_q", m.dc_offset_q);
            m.drift_slope = value_or(x, "drift_slope", m.drift_slope);
        }
        if (const auto it = j.find("chain"); it != j.end()) {
            auto& c = p.chain;
            const json& x = *it;
            c.iq.deadband = value_or(x, "iq_deadband", c.iq.deadband);
            c.lpf.order = value_or(x, "lpf_order", c.lpf.order);
            c.lpf.cutoff = value_or(x, "lpf_cutoff", c.lpf.cutoff);
            c.stft.window_len = value_or(x, "stft_window_len", c.stft.window_len);
            c.stft.hop = value_or(x, "stft_hop", c.stft.hop);
            c.stft.fft_len = value_or(x, "stft_fft_len", c.stft.fft_len);
            c.stft.window = dsp::taper_from_string(value_or(x, "stft_window", dsp::to_string(c.stft.window)));
            c.range_db = value_or(x, "range_db", c.range_db);
            c.freq_span = value_or(x, "freq_span", c.freq_span);
            c.binary_threshold = optional_from(x, "binary_threshold");
        }
        return p;
    } catch (const json::exception& e) {
        throw FormatError(std::string("dataset config: ") + e.what());
    }
}

std::vector<ManifestEntry> plan_entries(const DatasetPlan& plan)
{
    plan.validate();
    struct Bucket {
        Cohort cohort;
        Split split;
        std::size_t count;
    };
    std::vector<ManifestEntry> entries;
    const std::size_t n_eval = plan.eval_per_class();
    const std::size_t n_train = plan.train_per_class();
    for (int cls = 1; cls <= motion::kNumClasses; ++cls) {
        std::vector<Bucket> buckets;
        auto add_cohort = [&](Cohort c, double share) {
            const auto tr = static_cast<std::size_t>(std::llround(static_cast<double>(n_train) * share));
            const auto ev = static_cast<std::size_t>(std::llround(static_cast<double>(n_eval) * share));
            buckets.push_back({c, Split::train, tr});
            buckets.push_back({c, Split::eval, ev});
        };
        if (plan.case_id == 1) {
            add_cohort(Cohort::trained, 1.0);
        } else if (plan.case_id == 2) {
            add_cohort(Cohort::untrained, 1.0);
        } else {
            add_cohort(Cohort::trained, plan.trained_share);
            buckets.push_back({Cohort::untrained, Split::train, n_train - buckets[0].count});
            buckets.push_back({Cohort::untrained, Split::eval, n_eval - buckets[1].count});
        }
        for (const auto& b : buckets) {
            const bool trained = b.cohort == Cohort::trained;
            const std::size_t total = trained ? plan.trained_subjects : plan.untrained_subjects;
            const std::size_t held = trained ? plan.trained_eval_subjects : plan.untrained_eval_subjects;
            // Eval subjects are the last `held` ids of the cohort.
            const std::size_t first = b.split == Split::train ? 0 : total - held;
            const std::size_t n_subjects = b.split == Split::train ? total - held : held;
            for (std::size_t j = 0; j < b.count; ++j) {
                ManifestEntry e;
                e.class_id = cls;
                e.cohort = b.cohort;
                e.split = b.split;
                e.subject_id = first + j % n_subjects;
                const std::size_t ordinal = j / n_subjects;
                const std::size_t trajectory = ordinal / plan.windows_per_trajectory;
                e.window_index = ordinal % plan.windows_per_trajectory;
                e.seed = derive_seed({plan.seed, static_cast<std::uint64_t>(plan.case_id),
                                      static_cast<std::uint64_t>(cls), static_cast<std::uint64_t>(b.cohort),
                                      e.subject_id, trajectory});
                char name[96];
                std::snprintf(name, sizeof name, "images/%s/c%d_%s_s%02zu_%05zu.pgm", to_string(b.split).c_str(),
                              cls, std::string(motion::to_string(b.cohort)).c_str(), e.subject_id, ordinal);
                e.image_path = name;
                entries.push_back(std::move(e));
            }
        }
    }
    return entries;
}

dsp::SpectrogramImage render_entry(const DatasetPlan& plan, const ManifestEntry& entry)
{
    const auto activity = motion::activity_from_id(entry.class_id);
    auto params = motion::sample_population(activity, entry.cohort, 1, entry.seed).front();
    params.tremor = plan.tremor && activity == motion::ActivityClass::no_motion;

    const double fs = plan.radar.sample_rate;
    const auto window_n = static_cast<std::size_t>(std::llround(plan.window_seconds * fs));
    const auto hop_n = static_cast<std::size_t>(std::llround(plan.window_hop_seconds * fs));
    const std::size_t total_n = window_n + hop_n * (plan.windows_per_trajectory - 1);
    const auto traj = motion::generate_trajectory(params, static_cast<double>(total_n) / fs, fs);
    const auto sig = channel::synthesize(traj, plan.radar, plan.tag, plan.impairments, derive_seed({entry.seed, 1}));

    const std::size_t start = hop_n * entry.window_index;
    if (start + window_n > sig.size()) {
        throw DomainError("window " + std::to_string(entry.window_index) + " lies beyond the trajectory");
    }
    channel::BasebandSignal window;
    window.sample_rate = sig.sample_rate;
    window.meta = sig.meta;
    window.i.assign(sig.i.begin() + static_cast<long>(start), sig.i.begin() + static_cast<long>(start + window_n));
    window.q.assign(sig.q.begin() + static_cast<long>(start), sig.q.begin() + static_cast<long>(start + window_n));

    auto chain = plan.chain;
    chain.image_size = plan.image_size;
    return dsp::process_window(window, chain).image;
}

namespace {

json entry_to_json(const ManifestEntry& e)
{
    return json{{"image_path", e.image_path},
                {"class_id", e.class_id},
                {"cohort", std::string(motion::to_string(e.cohort))},
                {"subject_id", e.subject_id},
                {"seed", e.seed},
                {"window_index", e.window_index},
                {"split", to_string(e.split)},
                {"image_crc", e.image_crc}};
}

ManifestEntry entry_from_json(const json& j)
{
    ManifestEntry e;
    e.image_path = j.at("image_path").get<std::string>();
    e.class_id = j.at("class_id").get<int>();
    e.cohort = motion::cohort_from_string(j.at("cohort").get<std::string>());
    e.subject_id = j.at("subject_id").get<std::size_t>();
    e.seed = j.at("seed").get<std::uint64_t>();
    e.window_index = j.at("window_index").get<std::size_t>();
    e.split = split_from_string(j.at("split").get<std::string>());
    e.image_crc = j.at("image_crc").get<std::uint32_t>();
    motion::activity_from_id(e.class_id);
    return e;
}

std::vector<std::string> entry_lines(const std::vector<ManifestEntry>& entries)
{
    std::vector<std::string> lines;
    lines.reserve(entries.size());
    for (const auto& e : entries) {
        lines.push_back(entry_to_json(e).dump());
    }
    return lines;
}

std::string hash_lines(const std::vector<std::string>& lines)
{
    std::string all;
    for (const auto& l : lines) {
        all += l;
        all += '\n';
    }
    return hex32(io::crc32(all));
}

}  // namespace

std::size_t DatasetManifest::count(Split s) const
{
    return static_cast<std::size_t>(
        std::count_if(entries.begin(), entries.end(), [&](const auto& e) { return e.split == s; }));
}

std::size_t DatasetManifest::count(Split s, int class_id) const
{
    return static_cast<std::size_t>(std::count_if(entries.begin(), entries.end(), [&](const auto& e) {
        return e.split == s && e.class_id == class_id;
    }));
}

std::size_t DatasetManifest::count(Cohort c) const
{
    return static_cast<std::size_t>(
        std::count_if(entries.begin(), entries.end(), [&](const auto& e) { return e.cohort == c; }));
}

DatasetManifest generate_dataset(const DatasetPlan& plan, const std::filesystem::path& out_dir)
{
    DatasetManifest manifest;
    manifest.plan = plan;
    manifest.entries = plan_entries(plan);
    std::error_code ec;
    std::filesystem::create_directories(out_dir / "images" / "train", ec);
    std::filesystem::create_directories(out_dir / "images" / "eval", ec);
    if (ec) {
        throw IoError("cannot create dataset directory " + out_dir.string() + ": " + ec.message());
    }
    for (auto& e : manifest.entries) {
        const auto bytes = dsp::encode_pgm(render_entry(plan, e));
        io::write_file(out_dir / e.image_path, bytes);
        e.image_crc = io::crc32(bytes);
    }
    manifest.content_hash = hash_lines(entry_lines(manifest.entries));
    write_manifest(manifest, out_dir / "manifest.jsonl");
    return manifest;
}

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path)
{
    const auto lines = entry_lines(manifest.entries);
    const json header{{"kind", kManifestKind},
                      {"version", kManifestVersion},
                      {"config", plan_to_json(manifest.plan)},
                      {"content_hash", hash_lines(lines)},
                      {"entries", lines.size()}};
    std::string text = header.dump() + "\n";
    for (const auto& l : lines) {
        text += l;
        text += '\n';
    }
    io::write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

DatasetManifest read_manifest(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open manifest '" + path.string() + "'");
    }
    auto fail = [&](std::size_t line_no, const std::string& why) {
        return FormatError("manifest '" + path.string() + "' line " + std::to_string(line_no) + ": " + why);
    };
    std::string line;
    if (!std::getline(in, line)) {
        throw FormatError("manifest '" + path.string() + "' is empty");
    }
    DatasetManifest m;
    std::size_t expected = 0;
    try {
        const auto header = json::parse(line);
        if (header.value("kind", std::string()) != kManifestKind) {
            throw fail(1, "not a dataset manifest header");
        }
        if (header.at("version").get<int>() != kManifestVersion) {
            throw fail(1, "unsupported manifest version");
        }
        m.plan = plan_from_json(header.at("config"));
        m.content_hash = header.at("content_hash").get<std::string>();
        expected = header.at("entries").get<std::size_t>();
    } catch (const json::exception& e) {
        throw fail(1, e.what());
    }
    std::vector<std::string> lines;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        try {
            m.entries.push_back(entry_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw fail(line_no, e.what());
        } catch (const Error& e) {
            throw fail(line_no, e.what());
        }
        lines.push_back(line);
    }
    if (m.entries.size() != expected) {
        throw FormatError("manifest '" + path.string() + "' lists " + std::to_string(m.entries.size()) +
                          " entries, header declares " + std::to_string(expected));
    }
    if (hash_lines(lines) != m.content_hash) {
        throw FormatError("manifest '" + path.string() + "': content hash mismatch");
    }
    return m;
}

LoadedDataset load_dataset(const std::filesystem::path& manifest_path)
{
    LoadedDataset ds;
    ds.manifest = read_manifest(manifest_path);
    const auto root = manifest_path.parent_path();
    const std::size_t n = ds.manifest.plan.image_size;
    for (std::size_t k = 0; k < ds.manifest.entries.size(); ++k) {
        const auto& e = ds.manifest.entries[k];
        const auto path = root / e.image_path;
        const std::string where = "manifest entry " + std::to_string(k) + " (" + path.string() + ")";
        std::vector<std::uint8_t> bytes;
        try {
            bytes = io::read_file(path);
        } catch (const IoError& err) {
            throw IoError(where + ": " + err.what());
        }
        if (io::crc32(bytes) != e.image_crc) {
            throw FormatError(where + ": checksum mismatch");
        }
        auto img = dsp::decode_pgm(bytes, path.string());
        if (img.n != n) {
            throw FormatError(where + ": image is " + std::to_string(img.n) + "x" + std::to_string(img.n) +
                              ", manifest declares " + std::to_string(n) + "x" + std::to_string(n));
        }
        cnn::Example ex{std::move(img.pixels), e.class_id};
        (e.split == Split::train ? ds.train : ds.eval).push_back(std::move(ex));
    }
    return ds;
}

void CentroidClassifier::fit(const std::vector<cnn::Example>& set)
{
    if (set.empty()) {
        throw DomainError("centroid classifier needs a non-empty training set");
    }
    const std::size_t dim = set.front().pixels.size();
    std::array<std::size_t, cnn::kNumClasses> counts{};
    for (auto& c : centroids_) {
        c.assign(dim, 0.0);
    }
    for (const auto& ex : set) {
        const auto c = static_cast<std::size_t>(ex.class_id - 1);
        for (std::size_t k = 0; k < dim; ++k) {
            centroids_[c][k] += ex.pixels[k];
        }
        ++counts[c];
    }
    for (std::size_t c = 0; c < cnn::kNumClasses; ++c) {
        if (counts[c] == 0) {
            centroids_[c].clear();
            continue;
        }
        for (auto& x : centroids_[c]) {
            x /= static_cast<double>(counts[c]);
        }
    }
}

int CentroidClassifier::predict(const std::vector<double>& pixels) const
{
    int best = 1;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cnn::kNumClasses; ++c) {
        if (centroids_[c].size() != pixels.size()) {
            continue;
        }
        double d = 0.0;
        for (std::size_t k = 0; k < pixels.size(); ++k) {
            const double diff = pixels[k] - centroids_[c][k];
            d += diff * diff;
        }
        if (d < best_d) {
            best_d = d;
            best = static_cast<int>(c) + 1;
        }
    }
    return best;
}

double CentroidClassifier::accuracy(const std::vector<cnn::Example>& set) const
{
    if (set.empty()) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    std::size_t correct = 0;
    for (const auto& ex : set) {
        correct += predict(ex.pixels) == ex.class_id ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(set.size());
}

}  // namespace harmodop::dataset
