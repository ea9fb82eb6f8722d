#include "zsar/evaluation.hpp"

#include "parallel.hpp"
#include "zsar/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

namespace zsar {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string utc_now() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string read_text(const fs::path& path, const char* what) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw EnvironmentError(std::string("cannot open ") + what + " " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path resolve(const fs::path& base, const std::string& p) {
    fs::path out = p;
    if (out.empty() || out.is_absolute() || base.empty()) return out.lexically_normal();
    return (base / out).lexically_normal();
}

std::string abs_string(const fs::path& p) {
    if (p.empty()) return {};
    return fs::absolute(p).lexically_normal().string();
}

void reject_unknown(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
    for (const auto& [key, _] : obj.items()) {
        if (!key.empty() && key[0] == '_') continue;
        bool ok = false;
        for (const char* a : allowed) ok = ok || key == a;
        if (!ok) throw ConfigError(where + ": unknown key '" + key + "'");
    }
}

EncoderSpec encoder_from_json(const json& j, const fs::path& base, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be an object");
    reject_unknown(j,
                   {"backend", "manifest", "model_tag", "embed_dim", "embedding_table", "text_model", "image_model",
                    "token_embedding", "bpe_merges", "context_length", "image_size", "pixel_mean", "pixel_std"},
                   where);
    EncoderSpec spec;
    const BackendKind backend = parse_backend_kind(j.value("backend", std::string("file")));
    if (j.contains("manifest")) spec = EncoderSpec::from_manifest(resolve(base, j.at("manifest").get<std::string>()));
    spec.backend = backend;
    if (backend == BackendKind::File && !j.contains("embed_dim") && !j.contains("manifest")) spec.embed_dim = 0;
    if (j.contains("model_tag")) spec.model_tag = j.at("model_tag").get<std::string>();
    if (j.contains("embed_dim")) spec.embed_dim = j.at("embed_dim").get<std::size_t>();
    auto path_field = [&](const char* key, fs::path& dst) {
        if (j.contains(key)) dst = resolve(base, j.at(key).get<std::string>());
    };
    path_field("embedding_table", spec.embedding_table);
    path_field("text_model", spec.text_model);
    path_field("image_model", spec.image_model);
    path_field("token_embedding", spec.token_embedding);
    path_field("bpe_merges", spec.bpe_merges);
    if (j.contains("context_length")) spec.context_length = j.at("context_length").get<std::size_t>();
    if (j.contains("image_size")) spec.image_size = j.at("image_size").get<int>();
    if (j.contains("pixel_mean")) spec.pixel_mean = j.at("pixel_mean").get<std::array<float, 3>>();
    if (j.contains("pixel_std")) spec.pixel_std = j.at("pixel_std").get<std::array<float, 3>>();
    return spec;
}

json encoder_to_json(const EncoderSpec& s) {
    json j;
    j["backend"] = std::string(to_string(s.backend));
    j["model_tag"] = s.model_tag;
    j["embed_dim"] = s.embed_dim;
    if (!s.embedding_table.empty()) j["embedding_table"] = abs_string(s.embedding_table);
    if (!s.text_model.empty()) j["text_model"] = abs_string(s.text_model);
    if (!s.image_model.empty()) j["image_model"] = abs_string(s.image_model);
    if (!s.token_embedding.empty()) j["token_embedding"] = abs_string(s.token_embedding);
    if (!s.bpe_merges.empty()) j["bpe_merges"] = abs_string(s.bpe_merges);
    j["context_length"] = s.context_length;
    j["image_size"] = s.image_size;
    j["pixel_mean"] = s.pixel_mean;
    j["pixel_std"] = s.pixel_std;
    return j;
}

std::string sanitize_id(std::string_view id) {
    std::string out;
    for (char c : id) {
        const bool keep = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
        out += keep ? c : '_';
    }
    return out;
}

std::string kind_list(const std::vector<std::string>& names, std::size_t limit) {
    std::string out;
    for (std::size_t i = 0; i < names.size() && i < limit; ++i) {
        if (i) out += ", ";
        out += names[i];
    }
    if (names.size() > limit) out += ", ... (" + std::to_string(names.size() - limit) + " more)";
    return out;
}

}  // namespace

// --------------------------------------------------------------- manifests

SplitManifest parse_split(std::string_view text, const LabelSpace& classes, const fs::path& root, std::string name,
                          std::string_view origin) {
    SplitManifest split;
    split.name = std::move(name);
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start < text.size()) {
        auto nl = text.find('\n', start);
        if (nl == std::string_view::npos) nl = text.size();
        std::string line(text.substr(start, nl - start));
        start = nl + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto first = line.find_first_not_of(" \t");
        if (first == std::string::npos || line[first] == '#') continue;
        line = line.substr(first, line.find_last_not_of(" \t") - first + 1);

        const std::string where = std::string(origin) + ":" + std::to_string(line_no);
        std::string rel;
        std::string id;
        const auto sep = line.find_last_of(" \t");
        if (line.find('\t') != std::string::npos) {
            const auto tab = line.rfind('\t');
            rel = line.substr(0, tab);
            id = line.substr(tab + 1);
            rel.erase(rel.find_last_not_of(" \t") + 1);
        } else if (sep != std::string::npos) {
            rel = line.substr(0, sep);
            id = line.substr(sep + 1);
            rel.erase(rel.find_last_not_of(" \t") + 1);
        } else {
            rel = line;
            const auto slash = rel.find('/');
            if (slash == std::string::npos) {
                throw FormatError(where + ": no class column and no class directory in '" + rel + "'");
            }
            id = rel.substr(0, slash);
        }

        std::optional<std::size_t> index;
        const bool numeric = !id.empty() && std::all_of(id.begin(), id.end(), [](unsigned char c) {
            return std::isdigit(c) != 0;
        });
        if (numeric) {
            const auto v = std::stoull(id);
            if (v >= classes.size()) {
                throw FormatError(where + ": class index " + id + " out of range (" + std::to_string(classes.size()) +
                                  " classes)");
            }
            index = static_cast<std::size_t>(v);
        } else {
            index = classes.find(id);
            if (!index) throw FormatError(where + ": unknown class '" + id + "'");
        }
        split.entries.push_back(ManifestEntry{resolve(root, rel), *index});
    }
    if (split.entries.empty()) throw FormatError(std::string(origin) + ": split has no samples");
    return split;
}

DatasetManifest DatasetManifest::load(const DatasetRef& ref) {
    if (ref.classes.empty()) throw ConfigError("dataset.classes is not set");
    if (ref.splits.empty()) throw ConfigError("dataset.splits is empty");
    DatasetManifest m;
    m.name = ref.name;
    m.classes = LabelSpace::load(ref.classes);
    if (m.classes.empty()) throw FormatError(ref.classes.string() + ": no classes");
    for (const auto& split_file : ref.splits) {
        const fs::path root = ref.root.empty() ? split_file.parent_path() : ref.root;
        m.splits.push_back(parse_split(read_text(split_file, "split file"), m.classes, root,
                                       split_file.stem().string(), split_file.string()));
    }
    return m;
}

// -------------------------------------------------------------- run config

RunConfig RunConfig::from_json(std::string_view text, const fs::path& base_dir) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw ConfigError("run config is not a JSON object");
    reject_unknown(j,
                   {"encoder", "backbone", "backbones", "frames", "sampling", "normalize_before_average",
                    "descriptors", "llm", "cache", "llm_caches", "dataset", "seed", "workers", "max_failure_rate",
                    "ablation"},
                   "run config");
    RunConfig cfg;
    cfg.descriptors.templates = default_templates();
    try {
        if (j.contains("backbones")) {
            for (const auto& [name, spec] : j.at("backbones").items()) {
                cfg.backbones[name] = encoder_from_json(spec, base_dir, "backbones." + name);
                if (!spec.contains("model_tag")) cfg.backbones[name].model_tag = name;
            }
        }
        if (j.contains("encoder")) {
            cfg.encoder = encoder_from_json(j.at("encoder"), base_dir, "encoder");
            cfg.backbone = j.value("backbone", std::string{});
        } else if (j.contains("backbone")) {
            cfg.use_backbone(j.at("backbone").get<std::string>());
        } else if (cfg.backbones.size() == 1) {
            cfg.use_backbone(cfg.backbones.begin()->first);
        } else {
            throw ConfigError("run config needs 'encoder' or 'backbone'");
        }
        cfg.frames = j.value("frames", cfg.frames);
        if (j.contains("sampling")) cfg.sampling = parse_sampling_anchor(j.at("sampling").get<std::string>());
        cfg.normalize_before_average = j.value("normalize_before_average", false);

        if (j.contains("descriptors")) {
            const auto& d = j.at("descriptors");
            reject_unknown(d, {"kinds", "prepend_class", "use_templates", "templates"}, "descriptors");
            if (d.contains("kinds")) {
                const auto& k = d.at("kinds");
                if (k.is_string()) {
                    cfg.descriptors.kinds = parse_descriptor_kinds(k.get<std::string>());
                } else {
                    cfg.descriptors.kinds.clear();
                    for (const auto& item : k) cfg.descriptors.kinds.push_back(parse_descriptor_kind(item.get<std::string>()));
                }
            }
            cfg.descriptors.prepend_class = d.value("prepend_class", false);
            cfg.descriptors.use_templates = d.value("use_templates", false);
            if (d.contains("templates")) {
                const auto& t = d.at("templates");
                if (t.is_string()) {
                    cfg.descriptors.templates = load_templates(resolve(base_dir, t.get<std::string>()));
                } else {
                    cfg.descriptors.templates = t.get<std::vector<std::string>>();
                }
            }
        }
        if (j.contains("llm")) {
            const auto& l = j.at("llm");
            reject_unknown(l, {"endpoint_url", "model_id", "temperature", "max_retries", "timeout_ms", "api_key_env"},
                           "llm");
            cfg.llm.endpoint_url = l.value("endpoint_url", cfg.llm.endpoint_url);
            cfg.llm.model_id = l.value("model_id", cfg.llm.model_id);
            cfg.llm.temperature = l.value("temperature", cfg.llm.temperature);
            cfg.llm.max_retries = l.value("max_retries", cfg.llm.max_retries);
            cfg.llm.timeout = std::chrono::milliseconds(l.value("timeout_ms", static_cast<long long>(cfg.llm.timeout.count())));
            cfg.llm.api_key_env_var = l.value("api_key_env", cfg.llm.api_key_env_var);
        }
        if (j.contains("cache")) cfg.cache = resolve(base_dir, j.at("cache").get<std::string>());
        if (j.contains("llm_caches")) {
            for (const auto& [id, p] : j.at("llm_caches").items()) cfg.llm_caches[id] = resolve(base_dir, p.get<std::string>());
        }
        if (j.contains("dataset")) {
            const auto& d = j.at("dataset");
            reject_unknown(d, {"name", "root", "classes", "splits"}, "dataset");
            cfg.dataset.name = d.value("name", std::string{});
            if (d.contains("root")) cfg.dataset.root = resolve(base_dir, d.at("root").get<std::string>());
            if (d.contains("classes")) cfg.dataset.classes = resolve(base_dir, d.at("classes").get<std::string>());
            if (d.contains("splits")) {
                const auto& s = d.at("splits");
                if (s.is_string()) {
                    cfg.dataset.splits.push_back(resolve(base_dir, s.get<std::string>()));
                } else {
                    for (const auto& p : s) cfg.dataset.splits.push_back(resolve(base_dir, p.get<std::string>()));
                }
            }
        }
        cfg.seed = j.value("seed", cfg.seed);
        cfg.workers = j.value("workers", cfg.workers);
        cfg.max_failure_rate = j.value("max_failure_rate", cfg.max_failure_rate);
        if (j.contains("ablation")) {
            const auto& a = j.at("ablation");
            reject_unknown(a, {"backbones", "frames", "llm_ids"}, "ablation");
            if (a.contains("backbones")) cfg.ablation.backbones = a.at("backbones").get<std::vector<std::string>>();
            if (a.contains("frames")) cfg.ablation.frames = a.at("frames").get<std::vector<std::size_t>>();
            if (a.contains("llm_ids")) cfg.ablation.llm_ids = a.at("llm_ids").get<std::vector<std::string>>();
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("run config: ") + e.what());
    }
    return cfg;
}

RunConfig RunConfig::load(const fs::path& path) {
    return from_json(read_text(path, "run config"), fs::absolute(path).parent_path());
}

std::string RunConfig::to_json(int indent) const {
    json j;
    j["encoder"] = encoder_to_json(encoder);
    if (!backbone.empty()) j["backbone"] = backbone;
    if (!backbones.empty()) {
        json b = json::object();
        for (const auto& [name, spec] : backbones) b[name] = encoder_to_json(spec);
        j["backbones"] = b;
    }
    j["frames"] = frames;
    j["sampling"] = std::string(to_string(sampling));
    j["normalize_before_average"] = normalize_before_average;
    json kinds = json::array();
    for (auto k : descriptors.kinds) kinds.push_back(std::string(to_string(k)));
    j["descriptors"] = {{"kinds", kinds},
                        {"prepend_class", descriptors.prepend_class},
                        {"use_templates", descriptors.use_templates},
                        {"templates", descriptors.templates}};
    j["llm"] = {{"endpoint_url", llm.endpoint_url},
                {"model_id", llm.model_id},
                {"temperature", llm.temperature},
                {"max_retries", llm.max_retries},
                {"timeout_ms", llm.timeout.count()},
                {"api_key_env", llm.api_key_env_var}};
    if (!cache.empty()) j["cache"] = abs_string(cache);
    if (!llm_caches.empty()) {
        json c = json::object();
        for (const auto& [id, p] : llm_caches) c[id] = abs_string(p);
        j["llm_caches"] = c;
    }
    json splits = json::array();
    for (const auto& s : dataset.splits) splits.push_back(abs_string(s));
    j["dataset"] = {{"name", dataset.name}, {"classes", abs_string(dataset.classes)}, {"splits", splits}};
    if (!dataset.root.empty()) j["dataset"]["root"] = abs_string(dataset.root);
    j["seed"] = seed;
    j["workers"] = workers;
    j["max_failure_rate"] = max_failure_rate;
    j["ablation"] = {{"backbones", ablation.backbones},
                     {"frames", ablation.frames},
                     {"llm_ids", ablation.llm_ids}};
    return j.dump(indent);
}

void RunConfig::validate(bool check_files) const {
    if (frames < 1) throw ConfigError("frames (N) must be >= 1");
    if (workers < 1) throw ConfigError("workers must be >= 1");
    if (!(max_failure_rate >= 0.0 && max_failure_rate <= 1.0)) throw ConfigError("max_failure_rate must be in [0, 1]");
    descriptors.validate();
    llm.validate();
    if (check_files) {
        encoder.validate();
        if (dataset.classes.empty()) throw ConfigError("dataset.classes is not set");
        if (dataset.splits.empty()) throw ConfigError("dataset.splits is empty");
        auto need = [](const fs::path& p, const char* what) {
            if (!fs::exists(p)) throw EnvironmentError(std::string(what) + " not found: " + p.string());
        };
        need(dataset.classes, "classes file");
        for (const auto& s : dataset.splits) need(s, "split file");
        if (!dataset.root.empty()) need(dataset.root, "dataset root");
    }
}

void RunConfig::use_backbone(const std::string& name) {
    auto it = backbones.find(name);
    if (it == backbones.end()) {
        std::string known;
        for (const auto& [k, _] : backbones) known += (known.empty() ? "" : ", ") + k;
        throw ConfigError("unknown backbone '" + name + "' (configured: " + (known.empty() ? "none" : known) + ")");
    }
    encoder = it->second;
    backbone = name;
}

fs::path RunConfig::cache_for(const std::string& llm_id) const {
    if (auto it = llm_caches.find(llm_id); it != llm_caches.end()) return it->second;
    if (cache.empty()) return {};
    if (llm_id == llm.model_id) return cache;
    fs::path p = cache;
    p.replace_filename(cache.stem().string() + "." + sanitize_id(llm_id) + cache.extension().string());
    return p;
}

// ----------------------------------------------------------------- metrics

SplitResult score_split(std::string name, std::vector<SampleOutcome> samples) {
    SplitResult r;
    r.name = std::move(name);
    std::size_t hit1 = 0;
    std::size_t hit5 = 0;
    for (const auto& s : samples) {
        if (s.failed) {
            ++r.failed;
            continue;
        }
        if (s.top.empty()) throw DomainError("score_split: sample '" + s.path + "' has an empty ranking");
        ++r.scored;
        const std::size_t k = std::min<std::size_t>(5, s.top.size());
        if (s.top[0] == s.truth) ++hit1;
        if (std::find(s.top.begin(), s.top.begin() + static_cast<std::ptrdiff_t>(k), s.truth) !=
            s.top.begin() + static_cast<std::ptrdiff_t>(k)) {
            ++hit5;
        }
    }
    if (r.scored > 0) {
        r.top1 = static_cast<double>(hit1) / static_cast<double>(r.scored);
        r.top5 = static_cast<double>(hit5) / static_cast<double>(r.scored);
    }
    r.samples = std::move(samples);
    return r;
}

Accuracy aggregate(const std::vector<SplitResult>& splits) {
    if (splits.empty()) throw DomainError("aggregate: no splits");
    Accuracy a;
    for (const auto& s : splits) {
        a.top1 += s.top1;
        a.top5 += s.top5;
    }
    a.top1 /= static_cast<double>(splits.size());
    a.top5 /= static_cast<double>(splits.size());
    return a;
}

// ------------------------------------------------------------------ report

std::string EvalReport::to_json(bool include_samples) const {
    json j;
    j["dataset"] = dataset;
    j["model_tag"] = model_tag;
    j["classes"] = classes;
    j["prompts_per_class"] = prompts_per_class;
    json splits = json::array();
    for (const auto& s : per_split) {
        json sj = {{"name", s.name}, {"top1", s.top1}, {"top5", s.top5}, {"scored", s.scored}, {"failed", s.failed}};
        if (include_samples) {
            json samples = json::array();
            for (const auto& o : s.samples) {
                json oj = {{"path", o.path}, {"truth", o.truth}};
                if (o.failed) {
                    oj["failed"] = true;
                    oj["error"] = o.error;
                } else {
                    oj["top"] = o.top;
                    oj["scores"] = o.top_scores;
                }
                samples.push_back(std::move(oj));
            }
            sj["samples"] = std::move(samples);
        }
        splits.push_back(std::move(sj));
    }
    j["splits"] = std::move(splits);
    j["mean"] = {{"top1", mean.top1}, {"top5", mean.top5}};
    json cfg = json::parse(config_json, nullptr, false);
    j["config"] = cfg.is_discarded() ? json(config_json) : cfg;
    j["started_at"] = started_at;
    j["wall_time_s"] = wall_time_s;
    return j.dump(2);
}

std::string EvalReport::to_table() const {
    std::size_t w = 5;
    for (const auto& s : per_split) w = std::max(w, s.name.size());
    std::ostringstream out;
    out << "dataset: " << (dataset.empty() ? "-" : dataset) << "  backbone: " << model_tag
        << "  classes: " << classes << "\n";
    out << std::left << std::setw(static_cast<int>(w)) << "Split" << std::right << std::setw(9) << "Samples"
        << std::setw(8) << "Failed" << std::setw(9) << "Top-1" << std::setw(9) << "Top-5" << "\n";
    out << std::fixed << std::setprecision(2);
    for (const auto& s : per_split) {
        out << std::left << std::setw(static_cast<int>(w)) << s.name << std::right << std::setw(9) << s.scored
            << std::setw(8) << s.failed << std::setw(9) << 100.0 * s.top1 << std::setw(9) << 100.0 * s.top5 << "\n";
    }
    out << std::left << std::setw(static_cast<int>(w)) << "Mean" << std::right << std::setw(17) << ""
        << std::setw(9) << 100.0 * mean.top1 << std::setw(9) << 100.0 * mean.top5 << "\n";
    return out.str();
}

// -------------------------------------------------------------- evaluation

std::map<std::size_t, DescriptorSet> resolve_descriptors(const RunConfig& cfg, const LabelSpace& labels,
                                                         ChatTransport* transport) {
    if (!cfg.descriptors.needs_descriptors()) return {};
    DescriptorCache cache = DescriptorCache::open(cfg.cache);
    GenerateAllResult result;
    if (transport != nullptr) {
        DescriptorGenerator generator(*transport, cfg.llm);
        result = generate_all(labels, generator, cache, cfg.workers);
    } else {
        result = lookup_all(labels, cache, cfg.llm.model_id);
    }
    if (!result.complete()) {
        std::vector<std::string> names;
        for (const auto& f : result.failures) names.push_back(f.action.raw_id);
        const auto& first = result.failures.front();
        std::string msg = "descriptors for llm '" + cfg.llm.model_id + "' unavailable for " +
                          std::to_string(names.size()) + " of " + std::to_string(labels.size()) + " classes (cache " +
                          (cfg.cache.empty() ? std::string("<none>") : cfg.cache.string()) + "): " +
                          kind_list(names, 20) + "; first error " + first.error_kind + ": " + first.message;
        if (transport == nullptr) msg += "; run 'zsar gen-descriptors' with the API key set to fill the cache";
        throw MissingDescriptorsError(msg);
    }
    return std::move(result.descriptors);
}

std::vector<ClassEmbedding> build_class_embeddings(const LabelSpace& labels,
                                                   const std::map<std::size_t, DescriptorSet>& descriptors,
                                                   const DescriptorConfig& dcfg, const Encoder& encoder,
                                                   bool normalize_before_average, unsigned workers) {
    dcfg.validate();
    if (labels.empty()) throw DomainError("build_class_embeddings: empty label space");
    std::vector<ClassEmbedding> out(labels.size());
    detail::parallel_for(labels.size(), workers, [&](std::size_t j) {
        const ActionClass& action = labels[j];
        const DescriptorSet* ds = nullptr;
        if (auto it = descriptors.find(j); it != descriptors.end()) ds = &it->second;
        if (ds == nullptr && dcfg.needs_descriptors()) {
            throw MissingDescriptorsError("no descriptors for class '" + action.raw_id + "'");
        }
        const PromptBatch batch = assemble(action, ds, dcfg);
        const EmbeddingMatrix m = encoder.encode_texts(batch.texts);
        out[j] = ClassEmbedding{action, class_embedding(m, normalize_before_average), batch.texts.size()};
    });
    return out;
}

Prediction classify_video(const fs::path& video, const std::vector<ClassEmbedding>& classes, const Encoder& encoder,
                          std::size_t frames, SamplingAnchor anchor, bool normalize_before_average, int image_size) {
    const VideoSample sample = load_sample(video, frames, anchor, image_size);
    const EmbeddingMatrix m = encoder.encode_frames(sample.frames);
    return predict(video_embedding(m, normalize_before_average), classes);
}

EvalReport evaluate(const RunConfig& cfg, const EvalDeps& deps) {
    const auto t0 = std::chrono::steady_clock::now();
    EvalReport report;
    report.started_at = utc_now();
    cfg.validate(true);

    const DatasetManifest manifest = DatasetManifest::load(cfg.dataset);
    const auto encoder = deps.encoder_factory(cfg.encoder);
    if (!encoder) throw BackendError("encoder factory returned null");
    const auto descriptors = resolve_descriptors(cfg, manifest.classes, deps.transport);
    const auto classes = build_class_embeddings(manifest.classes, descriptors, cfg.descriptors, *encoder,
                                                cfg.normalize_before_average, cfg.workers);

    report.dataset = cfg.dataset.name.empty() ? manifest.name : cfg.dataset.name;
    report.model_tag = cfg.encoder.model_tag;
    report.classes = classes.size();
    for (const auto& c : classes) report.prompts_per_class.push_back(c.M);
    report.config_json = cfg.to_json();

    const std::size_t k = std::min<std::size_t>(5, classes.size());
    for (const auto& split : manifest.splits) {
        std::vector<SampleOutcome> outcomes(split.entries.size());
        detail::parallel_for(split.entries.size(), cfg.workers, [&](std::size_t i) {
            const auto& entry = split.entries[i];
            SampleOutcome& o = outcomes[i];
            o.path = entry.path.string();
            o.truth = entry.class_index;
            try {
                const Prediction p = classify_video(entry.path, classes, *encoder, cfg.frames, cfg.sampling,
                                                    cfg.normalize_before_average, cfg.encoder.image_size);
                for (std::size_t r = 0; r < k; ++r) {
                    o.top.push_back(p.ranking[r].first.index);
                    o.top_scores.push_back(p.ranking[r].second);
                }
            } catch (const DecodeError& e) {
                o.failed = true;
                o.error = std::string(e.kind()) + ": " + e.what();
            } catch (const EmptyVideoError& e) {
                o.failed = true;
                o.error = std::string(e.kind()) + ": " + e.what();
            }
        });
        SplitResult r = score_split(split.name, std::move(outcomes));
        const double limit = cfg.max_failure_rate * static_cast<double>(split.entries.size());
        if (r.failed > 0) {
            std::cerr << "warning: split " << r.name << ": " << r.failed << " of " << split.entries.size()
                      << " samples failed to decode and were excluded\n";
        }
        if (static_cast<double>(r.failed) > limit || r.scored == 0) {
            std::string first;
            for (const auto& o : r.samples) {
                if (o.failed) {
                    first = o.error;
                    break;
                }
            }
            throw EvaluationAborted("split " + r.name + ": " + std::to_string(r.failed) + " of " +
                                    std::to_string(split.entries.size()) + " samples failed (limit " +
                                    std::to_string(cfg.max_failure_rate * 100.0) + "%); first: " + first);
        }
        report.per_split.push_back(std::move(r));
    }
    report.mean = aggregate(report.per_split);
    report.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

}  // namespace zsar
