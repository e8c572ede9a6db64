#include "nliforge/annotation_hub.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <mutex>
#include <numeric>
#include <random>
#include <set>

#include "nliforge/text.hpp"

namespace nliforge::annotation {

using json = nlohmann::json;

namespace {

[[noreturn]] void throw_errno(const std::string& what, const std::filesystem::path& path) {
    throw std::runtime_error(what + " " + path.string() + ": " + std::strerror(errno));
}

void write_all(int fd, const std::string& data, const std::filesystem::path& path) {
    std::size_t done = 0;
    while (done < data.size()) {
        const ssize_t n = ::write(fd, data.data() + done, data.size() - done);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw_errno("write", path);
        }
        done += static_cast<std::size_t>(n);
    }
}

void fsync_dir(const std::filesystem::path& dir) {
    const int fd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY);
    if (fd < 0) return;
    ::fsync(fd);
    ::close(fd);
}

// Write to a temporary file, fsync, rename over the target.
void write_durably(const std::filesystem::path& path, const std::string& data) {
    const auto tmp = path.string() + ".tmp";
    const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
    if (fd < 0) throw_errno("open", tmp);
    write_all(fd, data, tmp);
    if (::fsync(fd) != 0) {
        ::close(fd);
        throw_errno("fsync", tmp);
    }
    ::close(fd);
    std::filesystem::rename(tmp, path);
    fsync_dir(path.parent_path());
}

}  // namespace

nlohmann::ordered_json SessionProgress::to_json() const {
    nlohmann::ordered_json j;
    j["id"] = id;
    j["examples"] = examples;
    j["voted"] = voted;
    j["complete"] = complete;
    return j;
}

nlohmann::ordered_json ServedItem::to_json() const {
    nlohmann::ordered_json j;
    j["example_id"] = example_id;
    j["premise"] = premise;
    j["hypothesis"] = hypothesis;
    j["position"] = position;
    j["total"] = total;
    return j;
}

struct AnnotationHub::Session {
    std::string id;
    SessionSpec spec;
    std::map<std::string, std::size_t> example_index;
    std::map<std::string, std::vector<std::size_t>> order;  // annotator -> example indices
    std::map<VoteKey, Label> votes;
    std::filesystem::path log_path;
    int log_fd = -1;

    ~Session() {
        if (log_fd >= 0) ::close(log_fd);
    }
};

namespace {

json session_to_json(const std::string& id, const SessionSpec& spec) {
    json j;
    j["id"] = id;
    j["seed"] = spec.seed;
    j["threshold"] = spec.threshold;
    j["annotators"] = spec.annotators;
    j["examples"] = json::array();
    for (const auto& ex : spec.examples) {
        json e{{"id", ex.id}, {"premise", ex.premise}, {"hypothesis", ex.hypothesis}};
        if (ex.model_label) e["model_label"] = to_string(*ex.model_label);
        j["examples"].push_back(std::move(e));
    }
    return j;
}

SessionSpec session_from_json(const json& j) {
    SessionSpec spec;
    spec.seed = j.at("seed").get<std::uint64_t>();
    spec.threshold = j.at("threshold").get<std::size_t>();
    spec.annotators = j.at("annotators").get<std::vector<std::string>>();
    for (const auto& e : j.at("examples")) {
        HubExample ex{e.at("id").get<std::string>(), e.at("premise").get<std::string>(),
                      e.at("hypothesis").get<std::string>(), std::nullopt};
        if (e.contains("model_label")) ex.model_label = parse_label(e.at("model_label").get<std::string>());
        spec.examples.push_back(std::move(ex));
    }
    return spec;
}

void validate_spec(const SessionSpec& spec) {
    using K = HubError::Kind;
    if (spec.examples.empty()) throw HubError(K::bad_request, "session needs at least one example");
    if (spec.annotators.empty()) throw HubError(K::bad_request, "session needs at least one annotator");
    if (spec.threshold == 0 || spec.threshold > spec.annotators.size()) {
        throw HubError(K::bad_request, "majority threshold " + std::to_string(spec.threshold) +
                                           " is unreachable with " + std::to_string(spec.annotators.size()) +
                                           " annotator(s)");
    }
    std::set<std::string> seen;
    for (const auto& a : spec.annotators) {
        if (trim(a).empty()) throw HubError(K::bad_request, "empty annotator id");
        if (!seen.insert(a).second) throw HubError(K::bad_request, "duplicate annotator: " + a);
    }
    seen.clear();
    for (const auto& e : spec.examples) {
        if (e.id.empty()) throw HubError(K::bad_request, "example without id");
        if (!seen.insert(e.id).second) throw HubError(K::bad_request, "duplicate example id: " + e.id);
    }
}

}  // namespace

AnnotationHub::AnnotationHub(std::filesystem::path state_dir) : dir_(std::move(state_dir)) {
    std::filesystem::create_directories(dir_);
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir_)) {
        const std::string name = entry.path().filename().string();
        if (name.size() > 13 && name.ends_with(".session.json")) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());

    for (const auto& file : files) {
        const json j = json::parse(read_file(file));
        auto s = std::make_unique<Session>();
        s->id = j.at("id").get<std::string>();
        s->spec = session_from_json(j);
        for (std::size_t i = 0; i < s->spec.examples.size(); ++i) s->example_index[s->spec.examples[i].id] = i;
        for (const auto& a : s->spec.annotators) {
            std::vector<std::size_t> order(s->spec.examples.size());
            std::iota(order.begin(), order.end(), std::size_t{0});
            std::mt19937_64 rng(combine_seed(s->spec.seed, fnv1a64(a)));
            std::shuffle(order.begin(), order.end(), rng);
            s->order[a] = std::move(order);
        }

        s->log_path = dir_ / (s->id + ".votes.jsonl");
        std::string log = std::filesystem::exists(s->log_path) ? read_file(s->log_path) : std::string();
        std::size_t good_end = 0, pos = 0;
        while (pos < log.size()) {
            const std::size_t nl = log.find('\n', pos);
            if (nl == std::string::npos) {
                ++replay_.torn_lines;  // write interrupted before the newline
                break;
            }
            const std::string line = log.substr(pos, nl - pos);
            json v;
            try {
                v = json::parse(line);
            } catch (const json::exception&) {
                if (nl + 1 == log.size()) {
                    ++replay_.torn_lines;
                    break;
                }
                throw std::runtime_error("corrupt vote log " + s->log_path.string() + " at byte " +
                                         std::to_string(pos));
            }
            auto label = parse_label(v.at("label").get<std::string>());
            if (!label) throw std::runtime_error("unknown label in vote log " + s->log_path.string());
            const VoteKey key{v.at("example_id").get<std::string>(), v.at("annotator").get<std::string>()};
            if (s->votes.emplace(key, *label).second) {
                ++replay_.votes;
            } else {
                ++replay_.duplicates;
            }
            pos = good_end = nl + 1;
        }
        if (good_end < log.size()) std::filesystem::resize_file(s->log_path, good_end);

        s->log_fd = ::open(s->log_path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
        if (s->log_fd < 0) throw_errno("open", s->log_path);

        const std::string& id = s->id;
        if (id.size() > 1 && id[0] == 's') {
            try {
                next_id_ = std::max(next_id_, static_cast<std::size_t>(std::stoull(id.substr(1))) + 1);
            } catch (const std::exception&) {
            }
        }
        sessions_.emplace(id, std::move(s));
    }
}

AnnotationHub::~AnnotationHub() = default;

const AnnotationHub::Session& AnnotationHub::find(const std::string& id) const {
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw HubError(HubError::Kind::not_found, "unknown session: " + id);
    return *it->second;
}

AnnotationHub::Session& AnnotationHub::find(const std::string& id) {
    return const_cast<Session&>(std::as_const(*this).find(id));
}

std::string AnnotationHub::create_session(const SessionSpec& spec) {
    validate_spec(spec);
    std::unique_lock lock(mutex_);
    char buf[32];
    std::snprintf(buf, sizeof buf, "s%04zu", next_id_++);
    const std::string id = buf;
    write_durably(dir_ / (id + ".session.json"), session_to_json(id, spec).dump(2) + "\n");

    auto s = std::make_unique<Session>();
    s->id = id;
    s->spec = spec;
    for (std::size_t i = 0; i < spec.examples.size(); ++i) s->example_index[spec.examples[i].id] = i;
    for (const auto& a : spec.annotators) {
        std::vector<std::size_t> order(spec.examples.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::mt19937_64 rng(combine_seed(spec.seed, fnv1a64(a)));
        std::shuffle(order.begin(), order.end(), rng);
        s->order[a] = std::move(order);
    }
    s->log_path = dir_ / (id + ".votes.jsonl");
    s->log_fd = ::open(s->log_path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (s->log_fd < 0) throw_errno("open", s->log_path);
    fsync_dir(dir_);
    sessions_.emplace(id, std::move(s));
    return id;
}

std::optional<ServedItem> AnnotationHub::next_unlabeled(const std::string& session,
                                                        const std::string& annotator) const {
    std::shared_lock lock(mutex_);
    const Session& s = find(session);
    auto it = s.order.find(annotator);
    if (it == s.order.end()) throw HubError(HubError::Kind::not_found, "unknown annotator: " + annotator);
    for (std::size_t pos = 0; pos < it->second.size(); ++pos) {
        const HubExample& ex = s.spec.examples[it->second[pos]];
        if (s.votes.count({ex.id, annotator})) continue;
        return ServedItem{ex.id, ex.premise, ex.hypothesis, pos, it->second.size()};
    }
    return std::nullopt;
}

void AnnotationHub::submit_vote(const std::string& session, const std::string& example_id,
                                const std::string& annotator, Label label) {
    std::unique_lock lock(mutex_);
    Session& s = find(session);
    if (!s.order.count(annotator)) throw HubError(HubError::Kind::not_found, "unknown annotator: " + annotator);
    if (!s.example_index.count(example_id)) {
        throw HubError(HubError::Kind::not_found, "unknown example in session " + session + ": " + example_id);
    }
    const VoteKey key{example_id, annotator};
    if (s.votes.count(key)) {
        throw HubError(HubError::Kind::conflict, annotator + " already voted on " + example_id);
    }
    nlohmann::ordered_json line;
    line["example_id"] = example_id;
    line["annotator"] = annotator;
    line["label"] = to_string(label);
    write_all(s.log_fd, line.dump() + "\n", s.log_path);
    if (::fsync(s.log_fd) != 0) throw_errno("fsync", s.log_path);
    s.votes.emplace(key, label);
}

VoteTable AnnotationHub::vote_table(const std::string& session) const {
    std::shared_lock lock(mutex_);
    const Session& s = find(session);
    VoteTable t;
    for (const auto& ex : s.spec.examples) t.example_ids.push_back(ex.id);
    t.annotators = s.spec.annotators;
    t.votes = s.votes;
    t.threshold = s.spec.threshold;
    return t;
}

AgreementReport AnnotationHub::report(const std::string& session) const {
    std::map<std::string, Label> model;
    {
        std::shared_lock lock(mutex_);
        const Session& s = find(session);
        bool all = true;
        for (const auto& ex : s.spec.examples) all = all && ex.model_label.has_value();
        if (all) {
            for (const auto& ex : s.spec.examples) model[ex.id] = *ex.model_label;
        }
    }
    const VoteTable table = vote_table(session);
    if (table.annotators.size() < 2) {
        throw HubError(HubError::Kind::bad_request, "agreement needs at least two annotators");
    }
    return agreement_report(table, model);
}

SessionProgress AnnotationHub::progress(const std::string& session) const {
    std::shared_lock lock(mutex_);
    const Session& s = find(session);
    SessionProgress p;
    p.id = s.id;
    p.examples = s.spec.examples.size();
    for (const auto& a : s.spec.annotators) p.voted[a] = 0;
    for (const auto& [key, _] : s.votes) ++p.voted[key.second];
    p.complete = s.votes.size() == p.examples * s.spec.annotators.size();
    return p;
}

std::vector<std::string> AnnotationHub::sessions() const {
    std::shared_lock lock(mutex_);
    std::vector<std::string> out;
    for (const auto& [id, _] : sessions_) out.push_back(id);
    return out;
}

std::vector<HubExample> hub_examples(const Corpus& corpus) {
    std::vector<HubExample> out;
    out.reserve(corpus.size());
    for (const auto& ex : corpus) out.push_back({ex.id, ex.premise, ex.hypothesis, ex.label});
    return out;
}

}  // namespace nliforge::annotation
