#include "zsar/descriptors.hpp"

#include "zsar/errors.hpp"

#include <json.hpp>

#include <atomic>
#include <chrono>
#include <ctime>
#include <fstream>
#include <sstream>
#include <thread>

namespace zsar {

namespace prompts {

const std::string_view kDecomposition =
    "You are a chatbot specialised in video action decomposition. The user will provide you with an "
    "action and you will have to decompose it into three sequential observable steps. The steps must "
    "strictly be three. You must strictly provide each response as a python list, e.g., ['action1', "
    "'action2', action3']. Omit any kind of introduction, the response must only contain the three "
    "actions. Comply strictly to the template. Do not ask for any clarification, just give your best "
    "answer. It is for a school project, so it's very important. It is also very important your "
    "response is in the form of a python list.";

const std::string_view kDescription =
    "You are a chatbot specialised in video action description. The user will provide you with an "
    "action and you will have to describe the action by providing only visually related information. "
    "You must strictly provide each response as a Python string. The description should be succinct "
    "and general. Omit any kind of introduction. Comply strictly to the template. Do not ask for any "
    "clarification, just give your best answer. Following is an example. Action label: typing. "
    "Description: Typing normally involve a person and a device with keyboard. When typing, the "
    "individual positions their fingers over the keyboard.";

const std::string_view kContext =
    "You are a chatbot specialised in video understanding. The user will provide you with the name of "
    "an action, and you will have to provide two specific pieces of information about that action. "
    "The first one is the context, which consists of any visually relevant feature that may be "
    "expected to appear in a video portraying that action. The second one consists of a lists of "
    "objects that may involved in the action. You must strictly provide each response as a python "
    "dictionary, e.g., {'context': 'a person', 'objects': ['person']}. Omit any kind of introduction, "
    "the response must only contain the two pieces of information. Comply strictly to the template. "
    "Do not ask for any clarification, just give your best answer. It is for a school project, so "
    "it's very important. It is also very important your response is in the form of a python "
    "dictionary.";

}  // namespace prompts

namespace {

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace

void DescriptorSet::validate() const {
    const std::string who = " for '" + action.display + "'";
    if (decomposition.size() != 3) throw DomainError("decomposition must have exactly 3 steps" + who);
    for (const auto& s : decomposition) {
        if (s.empty()) throw DomainError("empty decomposition step" + who);
    }
    if (description.empty()) throw DomainError("empty description" + who);
    if (context.empty()) throw DomainError("empty context" + who);
    if (objects.empty()) throw DomainError("objects list is empty" + who);
    for (const auto& o : objects) {
        if (o.empty()) throw DomainError("empty object entry" + who);
    }
}

// ------------------------------------------------------------- generator

DescriptorGenerator::DescriptorGenerator(ChatTransport& transport, LlmConfig config)
    : transport_(transport), config_(std::move(config)) {
    config_.validate();
}

template <class Parse>
auto DescriptorGenerator::query(std::string_view system_prompt, const ActionClass& action, Parse parse) {
    const ChatRequest request{config_.model_id, std::string(system_prompt), action.display,
                              config_.temperature};
    std::string last_error;
    std::string last_raw;
    bool last_was_parse = true;
    for (int attempt = 1; attempt <= config_.max_retries; ++attempt) {
        std::string raw;
        try {
            raw = transport_.complete(request);
        } catch (const TransportError& e) {
            if (!e.retryable()) throw;
            last_error = e.what();
            last_raw = e.raw_response();
            last_was_parse = false;
            continue;
        }
        try {
            return parse(raw);
        } catch (const ParseError& e) {
            last_error = e.what();
            last_raw = raw;
            last_was_parse = true;
        }
    }
    const std::string msg = "'" + action.display + "': " + last_error + " (after " +
                            std::to_string(config_.max_retries) + " attempts)";
    if (last_was_parse) throw ParseError(msg, last_raw);
    throw TransportError(msg, last_raw);
}

std::vector<std::string> DescriptorGenerator::generate_decomposition(const ActionClass& action) {
    return query(prompts::kDecomposition, action,
                 [](const std::string& raw) { return parse_decomposition(raw); });
}

std::string DescriptorGenerator::generate_description(const ActionClass& action) {
    return query(prompts::kDescription, action,
                 [](const std::string& raw) { return parse_description(raw); });
}

ContextInfo DescriptorGenerator::generate_context(const ActionClass& action) {
    return query(prompts::kContext, action, [](const std::string& raw) { return parse_context(raw); });
}

DescriptorSet DescriptorGenerator::generate(const ActionClass& action) {
    DescriptorSet ds;
    ds.action = action;
    ds.decomposition = generate_decomposition(action);
    ds.description = generate_description(action);
    auto ctx = generate_context(action);
    ds.context = std::move(ctx.context);
    ds.objects = std::move(ctx.objects);
    ds.llm_model_id = config_.model_id;
    ds.generated_at = utc_now();
    ds.validate();
    return ds;
}

// ----------------------------------------------------------------- cache

DescriptorCache::DescriptorCache(std::filesystem::path path) : path_(std::move(path)) {}

DescriptorCache::DescriptorCache(DescriptorCache&& other) noexcept {
    std::lock_guard lock(other.mutex_);
    path_ = std::move(other.path_);
    records_ = std::move(other.records_);
}

DescriptorCache& DescriptorCache::operator=(DescriptorCache&& other) noexcept {
    if (this != &other) {
        std::scoped_lock lock(mutex_, other.mutex_);
        path_ = std::move(other.path_);
        records_ = std::move(other.records_);
    }
    return *this;
}

DescriptorCache DescriptorCache::open(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) return DescriptorCache(path);
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read descriptor cache " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str(), path);
}

std::optional<DescriptorSet> DescriptorCache::get(const ActionClass& action,
                                                  std::string_view llm_model_id) const {
    std::lock_guard lock(mutex_);
    auto it = records_.find(action.display);
    if (it == records_.end() || it->second.llm_model_id != llm_model_id) return std::nullopt;
    const Record& r = it->second;
    return DescriptorSet{action, r.decomposition, r.description, r.context,
                         r.objects, r.llm_model_id, r.generated_at};
}

void DescriptorCache::put(const DescriptorSet& ds) {
    ds.validate();
    std::lock_guard lock(mutex_);
    records_[ds.action.display] =
        Record{ds.decomposition, ds.description, ds.context, ds.objects, ds.llm_model_id, ds.generated_at};
}

std::size_t DescriptorCache::size() const {
    std::lock_guard lock(mutex_);
    return records_.size();
}

std::string DescriptorCache::to_json() const {
    nlohmann::json doc = nlohmann::json::object();
    {
        std::lock_guard lock(mutex_);
        for (const auto& [label, r] : records_) {
            doc[label] = {
                {"decomposition", r.decomposition}, {"description", r.description},
                {"context", r.context},             {"objects", r.objects},
                {"llm_model_id", r.llm_model_id},   {"generated_at", r.generated_at},
            };
        }
    }
    return doc.dump(2) + "\n";
}

DescriptorCache DescriptorCache::from_json(std::string_view text, std::filesystem::path path) {
    nlohmann::json doc = nlohmann::json::parse(text, nullptr, false);
    const std::string where = path.empty() ? std::string("descriptor cache") : path.string();
    if (doc.is_discarded() || !doc.is_object()) throw FormatError(where + " is not a JSON object");
    DescriptorCache cache(std::move(path));
    for (const auto& [label, entry] : doc.items()) {
        try {
            Record r{entry.at("decomposition").get<std::vector<std::string>>(),
                     entry.at("description").get<std::string>(),
                     entry.at("context").get<std::string>(),
                     entry.at("objects").get<std::vector<std::string>>(),
                     entry.at("llm_model_id").get<std::string>(),
                     entry.value("generated_at", std::string{})};
            DescriptorSet probe{ActionClass{label, label, 0}, r.decomposition, r.description,
                                r.context, r.objects, r.llm_model_id, r.generated_at};
            probe.validate();
            cache.records_.emplace(label, std::move(r));
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(where + ": malformed entry '" + label + "': " + e.what());
        } catch (const DomainError& e) {
            throw FormatError(where + ": invalid entry '" + label + "': " + e.what());
        }
    }
    return cache;
}

void DescriptorCache::save() const {
    if (path_.empty()) return;
    const std::string body = to_json();
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    auto tmp = path_;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write descriptor cache " + tmp.string());
        out << body;
        if (!out) throw IoError("short write on " + tmp.string());
    }
    std::filesystem::rename(tmp, path_);
}

// ------------------------------------------------------------ generate_all

GenerateAllResult generate_all(const LabelSpace& labels, DescriptorGenerator& generator,
                               DescriptorCache& cache, unsigned workers) {
    const auto& model_id = generator.config().model_id;
    GenerateAllResult result;
    std::vector<std::size_t> cold;
    for (const auto& cls : labels) {
        if (auto hit = cache.get(cls, model_id)) {
            result.descriptors.emplace(cls.index, std::move(*hit));
            ++result.cache_hits;
        } else {
            cold.push_back(cls.index);
        }
    }
    if (cold.empty()) return result;

    std::vector<std::optional<DescriptorSet>> produced(cold.size());
    std::vector<std::optional<ClassFailure>> failed(cold.size());
    std::mutex save_mutex;
    std::atomic<std::size_t> next{0};

    auto work = [&] {
        for (std::size_t i = next++; i < cold.size(); i = next++) {
            const ActionClass& cls = labels[cold[i]];
            try {
                DescriptorSet ds = generator.generate(cls);
                cache.put(ds);
                {
                    std::lock_guard lock(save_mutex);
                    cache.save();
                }
                produced[i] = std::move(ds);
            } catch (const Error& e) {
                failed[i] = ClassFailure{cls, std::string(e.kind()), e.what()};
            }
        }
    };

    const unsigned n = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(cold.size())));
    if (n == 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(n);
        for (unsigned t = 0; t < n; ++t) pool.emplace_back(work);
    }

    for (std::size_t i = 0; i < cold.size(); ++i) {
        if (produced[i]) {
            result.descriptors.emplace(cold[i], std::move(*produced[i]));
            ++result.generated;
        } else if (failed[i]) {
            result.failures.push_back(std::move(*failed[i]));
        }
    }
    return result;
}

GenerateAllResult lookup_all(const LabelSpace& labels, const DescriptorCache& cache,
                             std::string_view llm_model_id) {
    GenerateAllResult result;
    for (const auto& cls : labels) {
        if (auto hit = cache.get(cls, llm_model_id)) {
            result.descriptors.emplace(cls.index, std::move(*hit));
            ++result.cache_hits;
        } else {
            result.failures.push_back(
                ClassFailure{cls, "MissingDescriptors", "no cached descriptors for '" + cls.display + "'"});
        }
    }
    return result;
}

}  // namespace zsar
