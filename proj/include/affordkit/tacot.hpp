#pragma once

#include <chrono>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "affordkit/error.hpp"

namespace affordkit::tacot {

enum class Kind { Single, MultiStep };

/// Which layer rules a multi-step category follows.
enum class GarmentClass { None, UpperBody, Dress, LowerBody, Flat };

struct ObjectCategory {
    std::string name;
    Kind kind = Kind::Single;
    std::optional<std::string> single_action;  // present iff kind == Single
    GarmentClass garment = GarmentClass::None;
};

enum class Sleeve { Sleeveless, Short, Long, NotApplicable };
enum class Leg { Short, Long, NotApplicable };

struct StructuralAttributes {
    bool has_hood = false;
    Sleeve sleeve = Sleeve::NotApplicable;
    Leg leg = Leg::NotApplicable;
};

enum class Layer { Type, Structure, Attribute, Finalization };

struct SubAction {
    std::string verb;
    std::string target_part;
    Layer layer = Layer::Type;

    friend bool operator==(const SubAction&, const SubAction&) = default;
};

using Plan = std::vector<SubAction>;

std::string to_string(Kind k);
std::string to_string(GarmentClass g);
std::string to_string(Sleeve s);
std::string to_string(Leg l);
std::string to_string(Layer l);
Sleeve parse_sleeve(const std::string& s);
Leg parse_leg(const std::string& s);
GarmentClass parse_garment(const std::string& s);

/// "verb@part", the compact form used by case tables and the CLI.
std::string to_string(const SubAction& a);

class CategoryRegistry {
public:
    /// tissue, curtain, mask, hat, rope (single step) and clothes_with_hood,
    /// shirt, t_shirt, dress, pants, towel (multi step).
    static CategoryRegistry defaults();

    /// Adds or replaces a category. Single categories register their action
    /// verb in the vocabulary. Throws InvalidArgument on an ill-formed entry.
    void add(ObjectCategory c);
    /// {"categories": [{"name", "kind": "single"|"multi_step", "action"?, "garment"?}]}
    void extend(const nlohmann::json& config);

    const ObjectCategory& at(const std::string& name) const;  // UnknownCategory
    bool contains(const std::string& name) const { return index_.count(name) != 0; }
    const std::vector<ObjectCategory>& categories() const noexcept { return categories_; }
    bool is_verb(const std::string& verb) const { return vocabulary_.count(verb) != 0; }
    const std::set<std::string>& vocabulary() const noexcept { return vocabulary_; }

private:
    std::vector<ObjectCategory> categories_;
    std::map<std::string, std::size_t> index_;
    std::set<std::string> vocabulary_;
};

// ---------------------------------------------------------------------------
// Gating

enum class GateState { Undecided, Accept, Reject, Dormant, FeedbackPending };
enum class Decision { Accept, Reject };

std::string to_string(GateState s);

/// The semantic decision tree of one planning episode together with the
/// gate state of every node. Node 0 is the root.
class GateTrace {
public:
    struct Node {
        std::string id;
        Layer layer = Layer::Type;
        int parent = -1;
        std::vector<int> children;
        bool exclusive_children = false;  // accepting one child rejects its undecided siblings
        GateState state = GateState::Undecided;
        std::string note;
    };

    GateTrace();

    int add_node(const std::string& id, Layer layer, int parent, bool exclusive_children = false);
    int find(const std::string& id) const;  // -1 when absent
    int require(const std::string& id) const;

    const Node& node(int index) const { return nodes_.at(static_cast<std::size_t>(index)); }
    const std::vector<Node>& nodes() const noexcept { return nodes_; }
    GateState state(const std::string& id) const { return node(require(id)).state; }

    /// Accept opens the node; if its parent is exclusive the undecided
    /// siblings are rejected. Reject marks every descendant Dormant.
    /// Throws AlreadyDecided unless the node is Undecided or FeedbackPending.
    void decide(int index, Decision d, const std::string& note = {});
    void mark_feedback_pending(int index);

    /// Gating soundness: Reject implies dormant descendants, and exactly one
    /// child of the root is accepted.
    bool is_sound() const;

    nlohmann::json to_json() const;

private:
    void make_dormant(int index);

    std::vector<Node> nodes_;
    std::map<std::string, int> index_;
};

/// Functional form of GateTrace::decide.
GateTrace apply_gate(GateTrace trace, const std::string& node, Decision d);

// ---------------------------------------------------------------------------
// Oracles

/// Answers attribute queries for one episode. Implementations supply
/// answer(); the typed accessors parse it.
class AttributeOracle {
public:
    virtual ~AttributeOracle() = default;

    /// Raw answer text for a query ("category", "has_hood", "sleeve", "leg",
    /// "part_at_target"); `part` is only used by part_at_target.
    /// Throws OracleUnavailable if the answer cannot be obtained.
    virtual std::string answer(const std::string& query, const std::string& part) = 0;

    std::string category() { return answer("category", ""); }
    bool has_hood();
    Sleeve sleeve();
    Leg leg();
    bool part_at_target(const std::string& part);
};

/// Plain-text "key = value" script; part_at_target answers use the key
/// "part_at_target.<part>". '#' starts a comment.
class ScriptedOracle : public AttributeOracle {
public:
    ScriptedOracle() = default;
    explicit ScriptedOracle(const std::string& script);
    static ScriptedOracle from_file(const std::string& path);

    void set(const std::string& key, const std::string& value) { answers_[key] = value; }
    std::string answer(const std::string& query, const std::string& part) override;
    const std::map<std::string, std::string>& answers() const noexcept { return answers_; }

private:
    std::map<std::string, std::string> answers_;
};

/// Line-delimited JSON over a pair of file descriptors (a socket or pipes):
/// request {"query": "...", "part": "..."}, response {"answer": "..."}.
/// A response that does not arrive within the timeout raises
/// OracleUnavailable. Answers are cached so they stay stable within an
/// episode; call reset() between episodes.
class RemoteOracle : public AttributeOracle {
public:
    RemoteOracle(int read_fd, int write_fd, std::chrono::milliseconds timeout = std::chrono::seconds(10),
                 bool owns_fds = false);
    ~RemoteOracle() override;
    RemoteOracle(const RemoteOracle&) = delete;
    RemoteOracle& operator=(const RemoteOracle&) = delete;

    /// Connects over TCP; failure raises OracleUnavailable.
    static std::unique_ptr<RemoteOracle> connect(const std::string& host, int port,
                                                 std::chrono::milliseconds timeout = std::chrono::seconds(10));

    std::string answer(const std::string& query, const std::string& part) override;
    void reset() { cache_.clear(); }

private:
    std::string read_line();

    int read_fd_;
    int write_fd_;
    std::chrono::milliseconds timeout_;
    bool owns_fds_;
    std::string buffer_;
    std::map<std::pair<std::string, std::string>, std::string> cache_;
};

// ---------------------------------------------------------------------------
// Planning

struct PlanResult {
    Plan plan;
    GateTrace trace;
    std::string category;
    Kind kind = Kind::Single;
    int layers_traversed = 0;
};

/// Root classification: returns the registered kind of the category.
Kind classify_root(const ObjectCategory& o);

/// Traverses Type -> Structure -> Attribute -> Finalization under the
/// oracle's answers.
PlanResult plan(AttributeOracle& oracle, const CategoryRegistry& registry);

/// Re-checks the parts targeted by Attribute-layer actions and drops those
/// already at their target. Surviving actions keep their order.
Plan replan_after_feedback(const Plan& remaining, AttributeOracle& oracle);

bool layer_order_is_monotone(const Plan& p);

// ---------------------------------------------------------------------------
// Routing evaluation

struct RoutingCase {
    std::string name;
    std::string oracle_script;
    std::vector<std::string> expected;  // "verb@part"
};

struct CaseOutcome {
    std::string name;
    bool passed = false;
    std::vector<std::string> produced;
    std::string error;
};

struct RoutingReport {
    std::vector<CaseOutcome> cases;
    double accuracy = 1.0;
    std::vector<std::string> warnings;
};

/// The bundled table: one case per registered category/attribute
/// combination of the default registry.
std::vector<RoutingCase> bundled_cases();
std::vector<RoutingCase> parse_cases(const nlohmann::json& j);

RoutingReport evaluate_routing(const CategoryRegistry& registry, const std::vector<RoutingCase>& cases);

nlohmann::json to_json(const Plan& p);
nlohmann::json to_json(const RoutingReport& r);

}  // namespace affordkit::tacot
