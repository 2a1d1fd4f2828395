// SPDX-License-Identifier: Apache-2.0
#include "harmodop/runtime/stream.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "harmodop/error.hpp"
#include "harmodop/rng.hpp"

namespace harmodop::runtime {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0)
{
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

struct Chunk {
    std::size_t start = 0;  // absolute sample index
    std::vector<double> i, q;
};

struct WindowJob {
    std::size_t index = 0;
    double t_end = 0.0;
    channel::BasebandSignal window;
};

struct DspResult {
    std::size_t index = 0;
    double t_end = 0.0;
    dsp::SpectrogramImage image;
    double dsp_ms = 0.0;
    bool silent = false;
};

/// Shared event list and log writer.
class Sink {
public:
    explicit Sink(const std::filesystem::path& log_path)
    {
        if (!log_path.empty()) {
            out_.open(log_path);
            if (!out_) {
                throw IoError("cannot open decision log '" + log_path.string() + "'");
            }
        }
    }

    void event(double t, std::string kind, std::string message)
    {
        std::lock_guard lock(mu_);
        if (out_.is_open()) {
            nlohmann::json j{{"t", t}, {"event", kind}, {"message", message}};
            out_ << j.dump() << '\n';
        }
        events_.push_back({t, std::move(kind), std::move(message)});
    }

    void decision(const DecisionRecord& r)
    {
        std::lock_guard lock(mu_);
        if (out_.is_open()) {
            out_ << decision_json(r) << '\n';
        }
        decisions_.push_back(r);
    }

    std::vector<StreamEvent> take_events()
    {
        std::lock_guard lock(mu_);
        return std::move(events_);
    }
    std::vector<DecisionRecord> take_decisions()
    {
        std::lock_guard lock(mu_);
        return std::move(decisions_);
    }

private:
    std::mutex mu_;
    std::ofstream out_;
    std::vector<StreamEvent> events_;
    std::vector<DecisionRecord> decisions_;
};

/// Cuts the sample stream into overlapping windows on the decision grid:
/// decision k covers the `window` samples ending at floor(k fs / rate).
class WindowAssembler {
public:
    WindowAssembler(const StreamConfig& cfg, double fs, Sink& sink)
        : fs_(fs), rate_(cfg.update_rate), window_(static_cast<std::size_t>(std::llround(cfg.window_seconds * fs))),
          sink_(sink)
    {
    }

    std::vector<WindowJob> push(const Chunk& chunk)
    {
        if (chunk.start != expected_) {
            char msg[128];
            std::snprintf(msg, sizeof msg, "source underrun: expected sample %zu, got %zu", expected_, chunk.start);
            sink_.event(static_cast<double>(expected_) / fs_, "gap", msg);
            buf_i_.clear();
            buf_q_.clear();
            buf_start_ = chunk.start;
        }
        buf_i_.insert(buf_i_.end(), chunk.i.begin(), chunk.i.end());
        buf_q_.insert(buf_q_.end(), chunk.q.begin(), chunk.q.end());
        expected_ = chunk.start + chunk.i.size();

        std::vector<WindowJob> jobs;
        for (;;) {
            const std::size_t end = end_of(next_k_);
            if (end > expected_) {
                break;
            }
            if (end >= window_ && end - window_ >= buf_start_) {
                WindowJob job;
                job.index = next_k_;
                job.t_end = static_cast<double>(end) / fs_;
                job.window.sample_rate = fs_;
                const auto a = static_cast<long>(end - window_ - buf_start_);
                const auto b = a + static_cast<long>(window_);
                job.window.i.assign(buf_i_.begin() + a, buf_i_.begin() + b);
                job.window.q.assign(buf_q_.begin() + a, buf_q_.begin() + b);
                jobs.push_back(std::move(job));
            }
            ++next_k_;
        }
        // Keep only what the next window can still need.
        const std::size_t next_end = end_of(next_k_);
        const std::size_t keep_from = next_end > window_ ? next_end - window_ : 0;
        if (keep_from > buf_start_) {
            const std::size_t drop = std::min(keep_from - buf_start_, buf_i_.size());
            buf_i_.erase(buf_i_.begin(), buf_i_.begin() + static_cast<long>(drop));
            buf_q_.erase(buf_q_.begin(), buf_q_.begin() + static_cast<long>(drop));
            buf_start_ += drop;
        }
        return jobs;
    }

private:
    std::size_t end_of(std::size_t k) const
    {
        return static_cast<std::size_t>(std::floor(static_cast<double>(k) * fs_ / rate_ + 1e-9));
    }

    double fs_, rate_;
    std::size_t window_;
    Sink& sink_;
    std::vector<double> buf_i_, buf_q_;
    std::size_t buf_start_ = 0;
    std::size_t expected_ = 0;
    std::size_t next_k_ = 1;
};

class DspStage {
public:
    explicit DspStage(const StreamConfig& cfg)
        : chain_(cfg.chain), baseline_(cfg.baseline_history, cfg.baseline_update_every, cfg.baseline_margin)
    {
    }

    DspResult run(WindowJob job)
    {
        const auto t0 = Clock::now();
        auto res = dsp::process_window(job.window, chain_);
        baseline_.push(res.received_power);
        DspResult out;
        out.index = job.index;
        out.t_end = job.t_end;
        out.silent = res.motion_power < baseline_.threshold();
        out.image = std::move(res.image);
        out.dsp_ms = ms_since(t0);
        return out;
    }

private:
    dsp::ChainConfig chain_;
    dsp::AdaptiveBaseline baseline_;
};

DecisionRecord infer(const DspResult& r, const cnn::Model& model, double threshold)
{
    const auto t0 = Clock::now();
    DecisionRecord rec;
    rec.index = r.index;
    rec.t = r.t_end;
    if (r.silent) {
        rec.short_circuit = true;
        rec.decision.label = 4;
        rec.decision.scores = {0.0, 0.0, 0.0, 0.0};
    } else {
        rec.decision = cnn::classify(model, r.image, threshold);
    }
    rec.decision.timestamp = r.t_end;
    rec.proc_ms = r.dsp_ms + ms_since(t0);
    return rec;
}

/// Hands out fixed-size chunks of a prepared stream, optionally paced.
class Source {
public:
    Source(channel::BasebandSignal sig, double chunk_seconds)
        : sig_(std::move(sig)), chunk_(std::max<std::size_t>(
                                    1, static_cast<std::size_t>(std::llround(chunk_seconds * sig_.sample_rate))))
    {
    }

    std::optional<Chunk> next()
    {
        if (pos_ >= sig_.size()) {
            return std::nullopt;
        }
        Chunk c;
        c.start = pos_;
        const std::size_t end = std::min(sig_.size(), pos_ + chunk_);
        c.i.assign(sig_.i.begin() + static_cast<long>(pos_), sig_.i.begin() + static_cast<long>(end));
        c.q.assign(sig_.q.begin() + static_cast<long>(pos_), sig_.q.begin() + static_cast<long>(end));
        pos_ = end;
        return c;
    }

    double sample_rate() const { return sig_.sample_rate; }
    double duration() const { return sig_.duration(); }

private:
    channel::BasebandSignal sig_;
    std::size_t chunk_;
    std::size_t pos_ = 0;
};

void pace(const Chunk& c, double fs, double speed, Clock::time_point start)
{
    if (speed <= 0.0) {
        return;
    }
    const double stream_t = static_cast<double>(c.start + c.i.size()) / fs;
    std::this_thread::sleep_until(start + std::chrono::duration_cast<Clock::duration>(
                                              std::chrono::duration<double>(stream_t / speed)));
}

}  // namespace

std::vector<Segment> parse_scenario(const std::string& text)
{
    std::vector<Segment> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) {
            continue;
        }
        std::vector<std::string> parts;
        std::stringstream is(item);
        std::string p;
        while (std::getline(is, p, ':')) {
            parts.push_back(p);
        }
        if (parts.size() < 2 || parts.size() > 3) {
            throw ConfigError("scenario segment '" + item + "' must be class:seconds[:cohort]");
        }
        Segment s;
        try {
            std::size_t used = 0;
            s.class_id = std::stoi(parts[0], &used);
            if (used != parts[0].size()) {
                throw std::invalid_argument("class");
            }
            s.duration = std::stod(parts[1], &used);
            if (used != parts[1].size()) {
                throw std::invalid_argument("duration");
            }
        } catch (const std::logic_error&) {
            throw ConfigError("scenario segment '" + item + "' is not numeric");
        }
        if (parts.size() == 3) {
            s.cohort = motion::cohort_from_string(parts[2]);
        }
        motion::activity_from_id(s.class_id);
        if (!(s.duration > 0.0)) {
            throw ConfigError("scenario segment '" + item + "' needs a positive duration");
        }
        out.push_back(s);
    }
    if (out.empty()) {
        throw ConfigError("scenario is empty");
    }
    return out;
}

void StreamConfig::validate() const
{
    if (!(window_seconds > 0.0)) {
        throw ConfigError("stream window_seconds must be > 0");
    }
    if (!(update_rate > 0.0)) {
        throw ConfigError("stream update_rate must be > 0");
    }
    if (!(latency_budget > 0.0)) {
        throw ConfigError("stream latency_budget must be > 0");
    }
    if (!(speed >= 0.0)) {
        throw ConfigError("stream speed must be >= 0");
    }
    if (!(chunk_seconds > 0.0)) {
        throw ConfigError("stream chunk_seconds must be > 0");
    }
    channel::validate(radar);
    // The decision grid must land on whole samples at least every second.
    const double per_update = radar.sample_rate / update_rate;
    if (per_update < 1.0) {
        throw ConfigError("update_rate exceeds the sample rate");
    }
    if (window_samples() < chain.stft.window_len) {
        throw ConfigError("stream window is shorter than the STFT window");
    }
    if (source == SourceKind::synthesis) {
        if (scenario.empty()) {
            throw ConfigError("live synthesis needs a non-empty scenario");
        }
        for (const auto& s : scenario) {
            motion::activity_from_id(s.class_id);
            if (!(s.duration > 0.0)) {
                throw ConfigError("scenario segment durations must be > 0");
            }
        }
    } else if (iq_path.empty()) {
        throw UsageError("iq-file source needs an input path");
    }
}

std::size_t StreamConfig::window_samples() const
{
    return static_cast<std::size_t>(std::llround(window_seconds * radar.sample_rate));
}

double StreamReport::max_proc_ms() const
{
    double m = 0.0;
    for (const auto& d : decisions) {
        m = std::max(m, d.proc_ms);
    }
    return m;
}

double StreamReport::decision_rate() const
{
    if (decisions.size() < 2) {
        return 0.0;
    }
    const double span = decisions.back().t - decisions.front().t;
    return span > 0.0 ? static_cast<double>(decisions.size() - 1) / span : 0.0;
}

channel::BasebandSignal synthesize_scenario(const StreamConfig& cfg)
{
    const double fs = cfg.radar.sample_rate;
    motion::MotionTrajectory all;
    all.sample_rate = fs;
    double last_r = -1.0;
    for (std::size_t k = 0; k < cfg.scenario.size(); ++k) {
        const auto& seg = cfg.scenario[k];
        const auto activity = motion::activity_from_id(seg.class_id);
        const std::uint64_t seed = derive_seed({cfg.seed, 0x5e9u, k});
        auto params = motion::sample_population(activity, seg.cohort, 1, seed).front();
        const auto n = static_cast<std::size_t>(std::llround(seg.duration * fs));
        auto traj = motion::generate_trajectory(params, static_cast<double>(n) / fs, fs);
        // Shift so the tag does not jump between segments.
        const double offset = last_r < 0.0 ? 0.0 : last_r - traj.r.front();
        const double t0 = all.t.empty() ? 0.0 : static_cast<double>(all.t.size()) / fs;
        for (std::size_t j = 0; j < traj.size(); ++j) {
            all.t.push_back(t0 + traj.t[j]);
            all.r.push_back(std::max(traj.r[j] + offset, 0.05));
            all.v.push_back(traj.v[j]);
        }
        last_r = all.r.back();
        if (k == 0) {
            all.params = params;
        }
    }
    auto sig = channel::synthesize(all, cfg.radar, cfg.tag, cfg.impairments, derive_seed({cfg.seed, 0x10u}));
    sig.meta.source = "scenario";
    return sig;
}

std::string decision_json(const DecisionRecord& r)
{
    nlohmann::json j{{"t", r.t},
                     {"scores", r.decision.scores},
                     {"label", r.decision.label},
                     {"hidden", r.decision.hidden_class},
                     {"proc_ms", r.proc_ms}};
    return j.dump();
}

StreamReport stream(const StreamConfig& cfg, const cnn::Model& model)
{
    cfg.validate();
    const auto& spec = cnn::model_spec(model);
    if (spec.input_size != cfg.chain.image_size) {
        throw DomainError("model expects " + std::to_string(spec.input_size) + "x" +
                          std::to_string(spec.input_size) + " images, stream produces " +
                          std::to_string(cfg.chain.image_size) + "x" + std::to_string(cfg.chain.image_size));
    }
    if (cfg.frame_dir) {
        std::error_code ec;
        std::filesystem::create_directories(*cfg.frame_dir, ec);
        if (ec) {
            throw IoError("cannot create frame directory '" + cfg.frame_dir->string() + "': " + ec.message());
        }
    }
    Sink sink(cfg.log_path);

    channel::BasebandSignal sig;
    if (cfg.source == SourceKind::synthesis) {
        sig = synthesize_scenario(cfg);
    } else {
        if (!std::filesystem::exists(cfg.iq_path)) {
            throw IoError("IQ file '" + cfg.iq_path.string() + "' does not exist");
        }
        try {
            sig = channel::read_baseband(cfg.iq_path);
        } catch (const Error& e) {
            sink.event(0.0, "source_error", e.what());
            sig.sample_rate = cfg.radar.sample_rate;
        }
    }
    if (sig.sample_rate <= 0.0) {
        sig.sample_rate = cfg.radar.sample_rate;
    }
    if (sig.size() > 0 && sig.size() < cfg.window_samples()) {
        sink.event(sig.duration(), "gap", "stream ended before the first full window");
    }

    Source source(std::move(sig), cfg.chunk_seconds);
    const double fs = source.sample_rate();
    StreamReport report;
    report.stream_seconds = source.duration();

    auto emit = [&](const DecisionRecord& rec, const dsp::SpectrogramImage& image) {
        if (cfg.frame_dir) {
            char name[32];
            std::snprintf(name, sizeof name, "frame_%06zu.pgm", rec.index);
            try {
                dsp::write_pgm(image, *cfg.frame_dir / name);
            } catch (const Error& e) {
                sink.event(rec.t, "frame_error", e.what());
            }
        }
        sink.decision(rec);
    };

    const auto start = Clock::now();
    if (!cfg.threaded) {
        WindowAssembler assembler(cfg, fs, sink);
        DspStage dsp_stage(cfg);
        while (auto chunk = source.next()) {
            pace(*chunk, fs, cfg.speed, start);
            for (auto& job : assembler.push(*chunk)) {
                auto r = dsp_stage.run(std::move(job));
                emit(infer(r, model, cfg.hidden_threshold), r.image);
            }
        }
    } else {
        const QueuePolicy window_policy = cfg.speed > 0.0 ? cfg.policy : QueuePolicy::block;
        BoundedQueue<WindowJob> windows(cfg.queue_capacity, window_policy);
        BoundedQueue<DspResult> images(cfg.queue_capacity, QueuePolicy::block);
        BoundedQueue<std::pair<DecisionRecord, dsp::SpectrogramImage>> decisions(cfg.queue_capacity,
                                                                                 QueuePolicy::block);
        std::thread producer([&] {
            WindowAssembler assembler(cfg, fs, sink);
            while (auto chunk = source.next()) {
                pace(*chunk, fs, cfg.speed, start);
                for (auto& job : assembler.push(*chunk)) {
                    windows.push(std::move(job));
                }
            }
            windows.close();
        });
        std::thread dsp_worker([&] {
            DspStage dsp_stage(cfg);
            while (auto job = windows.pop()) {
                images.push(dsp_stage.run(std::move(*job)));
            }
            images.close();
        });
        std::thread inference_worker([&] {
            while (auto r = images.pop()) {
                auto rec = infer(*r, model, cfg.hidden_threshold);
                decisions.push({rec, std::move(r->image)});
            }
            decisions.close();
        });
        while (auto d = decisions.pop()) {
            emit(d->first, d->second);
        }
        producer.join();
        dsp_worker.join();
        inference_worker.join();
        report.windows_dropped = windows.dropped();
        report.max_queue_depth =
            std::max({windows.max_depth(), images.max_depth(), decisions.max_depth()});
    }
    report.wall_seconds = ms_since(start) / 1000.0;
    report.decisions = sink.take_decisions();
    report.events = sink.take_events();
    return report;
}

StreamReport stream(const StreamConfig& cfg)
{
    if (cfg.model_path.empty()) {
        throw UsageError("stream needs a model path");
    }
    const auto model = cnn::load_model(cfg.model_path);
    return stream(cfg, model);
}

}  // namespace harmodop::runtime
