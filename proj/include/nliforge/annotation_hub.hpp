#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include "nliforge/agreement.hpp"
#include "nliforge/corpus.hpp"

namespace nliforge::annotation {

class HubError : public std::runtime_error {
public:
    enum class Kind { not_found, conflict, bad_request };
    HubError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    [[nodiscard]] Kind kind() const { return kind_; }

private:
    Kind kind_;
};

struct HubExample {
    std::string id;
    std::string premise;
    std::string hypothesis;
    std::optional<Label> model_label;  // never served to annotators
};

struct SessionSpec {
    std::vector<HubExample> examples;
    std::vector<std::string> annotators;
    std::uint64_t seed = 0;
    std::size_t threshold = 2;
};

struct SessionProgress {
    std::string id;
    std::size_t examples = 0;
    std::map<std::string, std::size_t> voted;  // annotator -> votes cast
    bool complete = false;

    [[nodiscard]] nlohmann::ordered_json to_json() const;
};

// Item served to an annotator: no model label.
struct ServedItem {
    std::string example_id;
    std::string premise;
    std::string hypothesis;
    std::size_t position = 0;  // 0-based position in the annotator's order
    std::size_t total = 0;

    [[nodiscard]] nlohmann::ordered_json to_json() const;
};

// Sessions and votes persisted under a state directory:
//   <dir>/<session>.session.json  written once at creation
//   <dir>/<session>.votes.jsonl   append-only, fsynced before a vote is acknowledged
// Opening a hub replays both. A torn final line is ignored; a repeated
// (example, annotator) line keeps the first vote.
class AnnotationHub {
public:
    explicit AnnotationHub(std::filesystem::path state_dir);
    ~AnnotationHub();
    AnnotationHub(const AnnotationHub&) = delete;
    AnnotationHub& operator=(const AnnotationHub&) = delete;

    // Throws HubError(bad_request) on fewer than one annotator, duplicate
    // annotator or example ids, an empty example list, or a threshold the
    // annotator count cannot reach.
    std::string create_session(const SessionSpec& spec);

    // Next example the annotator has not voted on, in that annotator's fixed
    // order; nullopt when they are done.
    [[nodiscard]] std::optional<ServedItem> next_unlabeled(const std::string& session, const std::string& annotator) const;

    // Throws HubError(not_found) for an unknown session, annotator or example,
    // HubError(conflict) when the pair already has a vote.
    void submit_vote(const std::string& session, const std::string& example_id, const std::string& annotator,
                     Label label);

    // Throws IncompleteVoting naming the missing pairs.
    [[nodiscard]] AgreementReport report(const std::string& session) const;

    [[nodiscard]] SessionProgress progress(const std::string& session) const;
    [[nodiscard]] std::vector<std::string> sessions() const;
    [[nodiscard]] VoteTable vote_table(const std::string& session) const;

    // Replay statistics from construction, for diagnostics.
    struct ReplayStats {
        std::size_t votes = 0;
        std::size_t duplicates = 0;
        std::size_t torn_lines = 0;
    };
    [[nodiscard]] const ReplayStats& replay_stats() const { return replay_; }

private:
    struct Session;
    const Session& find(const std::string& id) const;
    Session& find(const std::string& id);

    std::filesystem::path dir_;
    mutable std::shared_mutex mutex_;
    std::map<std::string, std::unique_ptr<Session>> sessions_;
    std::size_t next_id_ = 1;
    ReplayStats replay_;
};

// Builds hub examples from a corpus, carrying the corpus label as the model
// label.
[[nodiscard]] std::vector<HubExample> hub_examples(const Corpus& corpus);

}  // namespace nliforge::annotation
