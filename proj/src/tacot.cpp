#include "affordkit/tacot.hpp"

#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>
#include <netdb.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>

namespace affordkit::tacot {

std::string to_string(Kind k) { return k == Kind::Single ? "single" : "multi_step"; }

std::string to_string(GarmentClass g) {
    switch (g) {
        case GarmentClass::None: return "none";
        case GarmentClass::UpperBody: return "upper_body";
        case GarmentClass::Dress: return "dress";
        case GarmentClass::LowerBody: return "lower_body";
        case GarmentClass::Flat: return "flat";
    }
    return "none";
}

std::string to_string(Sleeve s) {
    switch (s) {
        case Sleeve::Sleeveless: return "sleeveless";
        case Sleeve::Short: return "short";
        case Sleeve::Long: return "long";
        case Sleeve::NotApplicable: return "not_applicable";
    }
    return "not_applicable";
}

std::string to_string(Leg l) {
    switch (l) {
        case Leg::Short: return "short";
        case Leg::Long: return "long";
        case Leg::NotApplicable: return "not_applicable";
    }
    return "not_applicable";
}

std::string to_string(Layer l) {
    switch (l) {
        case Layer::Type: return "type";
        case Layer::Structure: return "structure";
        case Layer::Attribute: return "attribute";
        case Layer::Finalization: return "finalization";
    }
    return "type";
}

std::string to_string(GateState s) {
    switch (s) {
        case GateState::Undecided: return "undecided";
        case GateState::Accept: return "accept";
        case GateState::Reject: return "reject";
        case GateState::Dormant: return "dormant";
        case GateState::FeedbackPending: return "feedback_pending";
    }
    return "undecided";
}

std::string to_string(const SubAction& a) { return a.verb + "@" + a.target_part; }

Sleeve parse_sleeve(const std::string& s) {
    if (s == "sleeveless") return Sleeve::Sleeveless;
    if (s == "short") return Sleeve::Short;
    if (s == "long") return Sleeve::Long;
    if (s == "not_applicable") return Sleeve::NotApplicable;
    fail(ErrorCode::InvalidArgument, "unrecognized sleeve answer '" + s + "'");
}

Leg parse_leg(const std::string& s) {
    if (s == "short") return Leg::Short;
    if (s == "long") return Leg::Long;
    if (s == "not_applicable") return Leg::NotApplicable;
    fail(ErrorCode::InvalidArgument, "unrecognized leg answer '" + s + "'");
}

GarmentClass parse_garment(const std::string& s) {
    if (s == "upper_body") return GarmentClass::UpperBody;
    if (s == "dress") return GarmentClass::Dress;
    if (s == "lower_body") return GarmentClass::LowerBody;
    if (s == "flat") return GarmentClass::Flat;
    if (s == "none") return GarmentClass::None;
    fail(ErrorCode::InvalidArgument, "unrecognized garment class '" + s + "'");
}

// ---------------------------------------------------------------------------

namespace {

const char* const kBaseVocabulary[] = {
    "pull_out", "pull",      "hang",    "grasp_hat",      "put_back", "pick",     "place",
    "grasp_sleeve", "put_center", "put_hem", "grasp_shoulder", "fold_legs_secondary", "fold_half",
};

bool parse_bool(const std::string& s) {
    if (s == "true" || s == "yes" || s == "1") return true;
    if (s == "false" || s == "no" || s == "0") return false;
    fail(ErrorCode::InvalidArgument, "unrecognized boolean answer '" + s + "'");
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace

CategoryRegistry CategoryRegistry::defaults() {
    CategoryRegistry r;
    r.vocabulary_.insert(std::begin(kBaseVocabulary), std::end(kBaseVocabulary));
    r.add({"tissue", Kind::Single, "pull_out", GarmentClass::None});
    r.add({"curtain", Kind::Single, "pull", GarmentClass::None});
    r.add({"mask", Kind::Single, "hang", GarmentClass::None});
    r.add({"hat", Kind::Single, "hang", GarmentClass::None});
    r.add({"rope", Kind::Single, "pull", GarmentClass::None});
    r.add({"clothes_with_hood", Kind::MultiStep, std::nullopt, GarmentClass::UpperBody});
    r.add({"shirt", Kind::MultiStep, std::nullopt, GarmentClass::UpperBody});
    r.add({"t_shirt", Kind::MultiStep, std::nullopt, GarmentClass::UpperBody});
    r.add({"dress", Kind::MultiStep, std::nullopt, GarmentClass::Dress});
    r.add({"pants", Kind::MultiStep, std::nullopt, GarmentClass::LowerBody});
    r.add({"towel", Kind::MultiStep, std::nullopt, GarmentClass::Flat});
    return r;
}

void CategoryRegistry::add(ObjectCategory c) {
    if (c.name.empty()) fail(ErrorCode::InvalidArgument, "category name is empty");
    if ((c.kind == Kind::Single) != c.single_action.has_value()) {
        fail(ErrorCode::InvalidArgument, "category '" + c.name + "': single_action is required iff kind is single");
    }
    if (c.kind == Kind::MultiStep && c.garment == GarmentClass::None) {
        fail(ErrorCode::InvalidArgument, "multi-step category '" + c.name + "' needs a garment class");
    }
    if (vocabulary_.empty()) vocabulary_.insert(std::begin(kBaseVocabulary), std::end(kBaseVocabulary));
    if (c.single_action) vocabulary_.insert(*c.single_action);
    if (auto it = index_.find(c.name); it != index_.end()) {
        categories_[it->second] = std::move(c);
        return;
    }
    index_[c.name] = categories_.size();
    categories_.push_back(std::move(c));
}

void CategoryRegistry::extend(const nlohmann::json& config) {
    if (!config.contains("categories")) return;
    for (const auto& e : config.at("categories")) {
        ObjectCategory c;
        c.name = e.at("name").get<std::string>();
        const auto kind = e.value("kind", std::string("single"));
        if (kind == "single") {
            c.kind = Kind::Single;
            c.single_action = e.at("action").get<std::string>();
        } else if (kind == "multi_step") {
            c.kind = Kind::MultiStep;
            c.garment = parse_garment(e.at("garment").get<std::string>());
        } else {
            fail(ErrorCode::InvalidArgument, "unknown category kind '" + kind + "'");
        }
        add(std::move(c));
    }
}

const ObjectCategory& CategoryRegistry::at(const std::string& name) const {
    const auto it = index_.find(name);
    if (it == index_.end()) fail(ErrorCode::UnknownCategory, "category '" + name + "' is not registered");
    return categories_[it->second];
}

// ---------------------------------------------------------------------------

GateTrace::GateTrace() {
    nodes_.push_back({"root", Layer::Type, -1, {}, true, GateState::Accept, {}});
    index_["root"] = 0;
}

int GateTrace::add_node(const std::string& id, Layer layer, int parent, bool exclusive_children) {
    if (index_.count(id)) fail(ErrorCode::InvalidArgument, "duplicate gate node '" + id + "'");
    if (parent < 0 || parent >= static_cast<int>(nodes_.size())) fail(ErrorCode::InvalidArgument, "bad parent");
    const int idx = static_cast<int>(nodes_.size());
    nodes_.push_back({id, layer, parent, {}, exclusive_children, GateState::Undecided, {}});
    nodes_[static_cast<std::size_t>(parent)].children.push_back(idx);
    index_[id] = idx;
    // Children of a pruned branch are born dormant.
    const GateState ps = nodes_[static_cast<std::size_t>(parent)].state;
    if (ps == GateState::Reject || ps == GateState::Dormant) nodes_.back().state = GateState::Dormant;
    return idx;
}

int GateTrace::find(const std::string& id) const {
    const auto it = index_.find(id);
    return it == index_.end() ? -1 : it->second;
}

int GateTrace::require(const std::string& id) const {
    const int idx = find(id);
    if (idx < 0) fail(ErrorCode::InvalidArgument, "no gate node '" + id + "'");
    return idx;
}

void GateTrace::make_dormant(int index) {
    for (int c : nodes_[static_cast<std::size_t>(index)].children) {
        nodes_[static_cast<std::size_t>(c)].state = GateState::Dormant;
        make_dormant(c);
    }
}

void GateTrace::decide(int index, Decision d, const std::string& note) {
    Node& n = nodes_.at(static_cast<std::size_t>(index));
    if (n.state != GateState::Undecided && n.state != GateState::FeedbackPending) {
        fail(ErrorCode::AlreadyDecided, "gate node '" + n.id + "' is already " + to_string(n.state));
    }
    n.note = note;
    if (d == Decision::Reject) {
        n.state = GateState::Reject;
        make_dormant(index);
        return;
    }
    n.state = GateState::Accept;
    if (n.parent >= 0 && nodes_[static_cast<std::size_t>(n.parent)].exclusive_children) {
        for (int s : nodes_[static_cast<std::size_t>(n.parent)].children) {
            if (s != index && nodes_[static_cast<std::size_t>(s)].state == GateState::Undecided) {
                decide(s, Decision::Reject, "sibling accepted");
            }
        }
    }
}

void GateTrace::mark_feedback_pending(int index) {
    Node& n = nodes_.at(static_cast<std::size_t>(index));
    if (n.state != GateState::Undecided) fail(ErrorCode::AlreadyDecided, "gate node '" + n.id + "' is already decided");
    n.state = GateState::FeedbackPending;
}

bool GateTrace::is_sound() const {
    int accepted = 0;
    for (int c : nodes_[0].children) {
        if (nodes_[static_cast<std::size_t>(c)].state == GateState::Accept) ++accepted;
    }
    if (accepted != 1) return false;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const GateState s = nodes_[i].state;
        if (s != GateState::Reject && s != GateState::Dormant) continue;
        std::vector<int> stack(nodes_[i].children.begin(), nodes_[i].children.end());
        while (!stack.empty()) {
            const Node& d = nodes_[static_cast<std::size_t>(stack.back())];
            stack.pop_back();
            if (d.state != GateState::Dormant) return false;
            stack.insert(stack.end(), d.children.begin(), d.children.end());
        }
    }
    return true;
}

nlohmann::json GateTrace::to_json() const {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& n : nodes_) {
        nlohmann::json j{{"id", n.id}, {"layer", to_string(n.layer)}, {"state", to_string(n.state)}};
        if (n.parent >= 0) j["parent"] = nodes_[static_cast<std::size_t>(n.parent)].id;
        if (!n.note.empty()) j["note"] = n.note;
        out.push_back(std::move(j));
    }
    return out;
}

GateTrace apply_gate(GateTrace trace, const std::string& node, Decision d) {
    trace.decide(trace.require(node), d);
    return trace;
}

// ---------------------------------------------------------------------------

bool AttributeOracle::has_hood() { return parse_bool(answer("has_hood", "")); }
Sleeve AttributeOracle::sleeve() { return parse_sleeve(answer("sleeve", "")); }
Leg AttributeOracle::leg() { return parse_leg(answer("leg", "")); }
bool AttributeOracle::part_at_target(const std::string& part) { return parse_bool(answer("part_at_target", part)); }

ScriptedOracle::ScriptedOracle(const std::string& script) {
    std::istringstream in(script);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            fail(ErrorCode::InvalidArgument, "oracle script line " + std::to_string(lineno) + " lacks '='");
        }
        answers_[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
}

ScriptedOracle ScriptedOracle::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::Io, "cannot open oracle script " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ScriptedOracle(ss.str());
}

std::string ScriptedOracle::answer(const std::string& query, const std::string& part) {
    const std::string key = query == "part_at_target" ? query + "." + part : query;
    const auto it = answers_.find(key);
    if (it == answers_.end()) fail(ErrorCode::OracleUnavailable, "script has no answer for '" + key + "'");
    return it->second;
}

RemoteOracle::RemoteOracle(int read_fd, int write_fd, std::chrono::milliseconds timeout, bool owns_fds)
    : read_fd_(read_fd), write_fd_(write_fd), timeout_(timeout), owns_fds_(owns_fds) {}

RemoteOracle::~RemoteOracle() {
    if (!owns_fds_) return;
    ::close(read_fd_);
    if (write_fd_ != read_fd_) ::close(write_fd_);
}

std::unique_ptr<RemoteOracle> RemoteOracle::connect(const std::string& host, int port,
                                                    std::chrono::milliseconds timeout) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0) {
        fail(ErrorCode::OracleUnavailable, "cannot resolve " + host);
    }
    int fd = -1;
    for (addrinfo* p = res; p != nullptr; p = p->ai_next) {
        fd = ::socket(p->ai_family, p->ai_socktype, p->ai_protocol);
        if (fd < 0) continue;
        if (::connect(fd, p->ai_addr, p->ai_addrlen) == 0) break;
        ::close(fd);
        fd = -1;
    }
    ::freeaddrinfo(res);
    if (fd < 0) fail(ErrorCode::OracleUnavailable, "cannot connect to " + host + ":" + std::to_string(port));
    return std::make_unique<RemoteOracle>(fd, fd, timeout, true);
}

std::string RemoteOracle::read_line() {
    const auto deadline = std::chrono::steady_clock::now() + timeout_;
    while (true) {
        if (const auto nl = buffer_.find('\n'); nl != std::string::npos) {
            std::string line = buffer_.substr(0, nl);
            buffer_.erase(0, nl + 1);
            return line;
        }
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
        if (left.count() <= 0) fail(ErrorCode::OracleUnavailable, "oracle response timed out");
        pollfd pfd{read_fd_, POLLIN, 0};
        const int ready = ::poll(&pfd, 1, static_cast<int>(left.count()));
        if (ready < 0 && errno == EINTR) continue;
        if (ready < 0) fail(ErrorCode::OracleUnavailable, std::string("poll failed: ") + std::strerror(errno));
        if (ready == 0) fail(ErrorCode::OracleUnavailable, "oracle response timed out");
        char chunk[512];
        const ssize_t n = ::read(read_fd_, chunk, sizeof(chunk));
        if (n < 0 && errno == EINTR) continue;
        if (n <= 0) fail(ErrorCode::OracleUnavailable, "oracle connection closed");
        buffer_.append(chunk, static_cast<std::size_t>(n));
    }
}

std::string RemoteOracle::answer(const std::string& query, const std::string& part) {
    const auto key = std::make_pair(query, part);
    if (const auto it = cache_.find(key); it != cache_.end()) return it->second;

    const std::string request = nlohmann::json{{"query", query}, {"part", part}}.dump() + "\n";
    std::size_t sent = 0;
    while (sent < request.size()) {
        const ssize_t n = ::write(write_fd_, request.data() + sent, request.size() - sent);
        if (n < 0 && errno == EINTR) continue;
        if (n <= 0) fail(ErrorCode::OracleUnavailable, "cannot send oracle request");
        sent += static_cast<std::size_t>(n);
    }
    const std::string line = read_line();
    std::string value;
    try {
        value = nlohmann::json::parse(line).at("answer").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::OracleUnavailable, std::string("malformed oracle response: ") + e.what());
    }
    cache_[key] = value;
    return value;
}

// ---------------------------------------------------------------------------

Kind classify_root(const ObjectCategory& o) { return o.kind; }

namespace {

bool has_upper_rules(GarmentClass g) { return g == GarmentClass::UpperBody || g == GarmentClass::Dress; }

void check_attributes(const ObjectCategory& c, Sleeve sleeve, Leg leg) {
    bool ok = true;
    switch (c.garment) {
        case GarmentClass::UpperBody:
        case GarmentClass::Dress: ok = sleeve != Sleeve::NotApplicable && leg == Leg::NotApplicable; break;
        case GarmentClass::LowerBody: ok = sleeve == Sleeve::NotApplicable && leg != Leg::NotApplicable; break;
        case GarmentClass::Flat: ok = sleeve == Sleeve::NotApplicable && leg == Leg::NotApplicable; break;
        case GarmentClass::None: ok = false; break;
    }
    if (!ok) {
        fail(ErrorCode::InconsistentAttributes, "category '" + c.name + "' cannot have sleeve=" + to_string(sleeve) +
                                                    ", leg=" + to_string(leg));
    }
}

struct SideCheck {
    std::string part;
    std::string place_verb;
};

// Sleeve morphologies with their per-side checks, left before right.
struct SleeveOption {
    Sleeve sleeve;
    const char* id;
    std::vector<SideCheck> sides;
};

const std::vector<SleeveOption>& sleeve_options() {
    static const std::vector<SleeveOption> opts = {
        {Sleeve::Sleeveless, "sleeveless", {{"left_strap", "put_center"}, {"right_strap", "put_center"}}},
        {Sleeve::Short, "short_sleeve", {{"left_sleeve", "put_center"}, {"right_sleeve", "put_center"}}},
        {Sleeve::Long, "long_sleeve", {{"left_sleeve", "put_hem"}, {"right_sleeve", "put_hem"}}},
    };
    return opts;
}

// Builds the full decision subtree for one category below its type node.
void build_subtree(GateTrace& trace, const ObjectCategory& c, int type_node) {
    if (c.kind == Kind::Single) return;
    const std::string base = c.name + "/";
    const int structure = trace.add_node(base + "structure", Layer::Structure, type_node, true);
    if (has_upper_rules(c.garment)) trace.add_node(base + "structure/hood_fold", Layer::Structure, structure);
    trace.add_node(base + "structure/flatten", Layer::Structure, structure);
    if (c.garment != GarmentClass::Flat) {
        const int attr = trace.add_node(base + "attribute", Layer::Attribute, type_node, true);
        if (has_upper_rules(c.garment)) {
            for (const auto& opt : sleeve_options()) {
                const int o = trace.add_node(base + "attribute/" + opt.id, Layer::Attribute, attr);
                for (const auto& side : opt.sides) {
                    trace.add_node(base + "attribute/" + opt.id + "/" + side.part, Layer::Attribute, o);
                }
            }
        } else {
            const int longo = trace.add_node(base + "attribute/long_leg", Layer::Attribute, attr);
            trace.add_node(base + "attribute/long_leg/legs", Layer::Attribute, longo);
            trace.add_node(base + "attribute/short_leg", Layer::Attribute, attr);
        }
    }
    if (c.garment != GarmentClass::LowerBody) {
        const int fin = trace.add_node(base + "finalization", Layer::Finalization, type_node, true);
        trace.add_node(base + (c.garment == GarmentClass::Flat ? "finalization/half_fold" : "finalization/shoulder_to_hem"),
                       Layer::Finalization, fin);
    }
}

GateTrace build_tree(const CategoryRegistry& registry) {
    GateTrace trace;
    for (const auto& c : registry.categories()) {
        const int t = trace.add_node(c.name, Layer::Type, 0, false);
        build_subtree(trace, c, t);
    }
    return trace;
}

void emit(Plan& plan, const CategoryRegistry& registry, std::string verb, std::string part, Layer layer) {
    if (!registry.is_verb(verb)) fail(ErrorCode::InvalidArgument, "verb '" + verb + "' is not registered");
    plan.push_back({std::move(verb), std::move(part), layer});
}

}  // namespace

PlanResult plan(AttributeOracle& oracle, const CategoryRegistry& registry) {
    PlanResult out;
    out.trace = build_tree(registry);
    GateTrace& trace = out.trace;

    const std::string name = oracle.category();
    const ObjectCategory& cat = registry.at(name);
    out.category = cat.name;
    out.kind = classify_root(cat);

    // Type layer: the matching category is accepted, every other branch rejected.
    const int type_node = trace.require(cat.name);
    trace.decide(type_node, Decision::Accept, "category=" + cat.name);
    out.layers_traversed = 1;
    if (cat.kind == Kind::Single) {
        emit(out.plan, registry, *cat.single_action, "object", Layer::Type);
        return out;
    }

    const std::string base = cat.name + "/";

    // Structure layer.
    trace.decide(trace.require(base + "structure"), Decision::Accept);
    ++out.layers_traversed;
    const int hood_node = trace.find(base + "structure/hood_fold");
    const int flatten_node = trace.require(base + "structure/flatten");
    const bool hood = has_upper_rules(cat.garment) && oracle.has_hood();
    if (hood) {
        trace.decide(hood_node, Decision::Accept, "has_hood=true");
        emit(out.plan, registry, "grasp_hat", "hood", Layer::Structure);
        emit(out.plan, registry, "put_back", "hood", Layer::Structure);
    } else {
        trace.decide(flatten_node, Decision::Accept, hood_node >= 0 ? "has_hood=false" : "");
        emit(out.plan, registry, "pick", "garment", Layer::Structure);
        emit(out.plan, registry, "place", "garment", Layer::Structure);
    }

    // Attribute layer: both attributes are confirmed before either is used.
    const Sleeve sleeve = oracle.sleeve();
    const Leg leg = oracle.leg();
    check_attributes(cat, sleeve, leg);
    if (const int attr = trace.find(base + "attribute"); attr >= 0) {
        trace.decide(attr, Decision::Accept);
        ++out.layers_traversed;
        auto verify = [&](const std::string& node_id, const std::string& part) {
            const int n = trace.require(node_id);
            trace.mark_feedback_pending(n);
            const bool done = oracle.part_at_target(part);
            trace.decide(n, done ? Decision::Reject : Decision::Accept,
                         done ? "feedback: already at target" : "feedback: not at target");
            return !done;
        };
        if (has_upper_rules(cat.garment)) {
            for (const auto& opt : sleeve_options()) {
                if (opt.sleeve != sleeve) continue;
                const std::string opt_id = base + "attribute/" + opt.id;
                trace.decide(trace.require(opt_id), Decision::Accept, "sleeve=" + to_string(sleeve));
                for (const auto& side : opt.sides) {
                    if (verify(opt_id + "/" + side.part, side.part)) {
                        emit(out.plan, registry, "grasp_sleeve", side.part, Layer::Attribute);
                        emit(out.plan, registry, side.place_verb, side.part, Layer::Attribute);
                    }
                }
            }
        } else if (leg == Leg::Long) {
            trace.decide(trace.require(base + "attribute/long_leg"), Decision::Accept, "leg=long");
            if (verify(base + "attribute/long_leg/legs", "legs")) {
                emit(out.plan, registry, "fold_legs_secondary", "legs", Layer::Attribute);
            }
        } else {
            trace.decide(trace.require(base + "attribute/short_leg"), Decision::Accept, "leg=short");
        }
    }

    // Finalization layer.
    if (const int fin = trace.find(base + "finalization"); fin >= 0) {
        trace.decide(fin, Decision::Accept);
        ++out.layers_traversed;
        if (cat.garment == GarmentClass::Flat) {
            trace.decide(trace.require(base + "finalization/half_fold"), Decision::Accept);
            emit(out.plan, registry, "fold_half", "towel", Layer::Finalization);
        } else {
            trace.decide(trace.require(base + "finalization/shoulder_to_hem"), Decision::Accept);
            emit(out.plan, registry, "grasp_shoulder", "shoulders", Layer::Finalization);
            emit(out.plan, registry, "put_hem", "shoulders", Layer::Finalization);
        }
    }
    return out;
}

Plan replan_after_feedback(const Plan& remaining, AttributeOracle& oracle) {
    std::map<std::string, bool> at_target;
    Plan out;
    for (const auto& a : remaining) {
        if (a.layer == Layer::Attribute) {
            auto it = at_target.find(a.target_part);
            if (it == at_target.end()) it = at_target.emplace(a.target_part, oracle.part_at_target(a.target_part)).first;
            if (it->second) continue;
        }
        out.push_back(a);
    }
    return out;
}

bool layer_order_is_monotone(const Plan& p) {
    return std::is_sorted(p.begin(), p.end(), [](const SubAction& a, const SubAction& b) {
        return static_cast<int>(a.layer) < static_cast<int>(b.layer);
    });
}

// ---------------------------------------------------------------------------

std::vector<RoutingCase> bundled_cases() {
    static const char* const kTable = R"json(
{
 "cases": [
  {
   "name": "tissue",
   "oracle": [
    "category = tissue"
   ],
   "expected": [
    "pull_out@object"
   ]
  },
  {
   "name": "curtain",
   "oracle": [
    "category = curtain"
   ],
   "expected": [
    "pull@object"
   ]
  },
  {
   "name": "mask",
   "oracle": [
    "category = mask"
   ],
   "expected": [
    "hang@object"
   ]
  },
  {
   "name": "hat",
   "oracle": [
    "category = hat"
   ],
   "expected": [
    "hang@object"
   ]
  },
  {
   "name": "rope",
   "oracle": [
    "category = rope"
   ],
   "expected": [
    "pull@object"
   ]
  },
  {
   "name": "clothes_with_hood_hood_long_FF",
   "oracle": [
    "category = clothes_with_hood",
    "has_hood = true",
    "sleeve = long",
    "leg = not_applicable",
    "part_at_target.left_sleeve = false",
    "part_at_target.right_sleeve = false"
   ],
   "expected": [
    "grasp_hat@hood",
    "put_back@hood",
    "grasp_sleeve@left_sleeve",
    "put_hem@left_sleeve",
    "grasp_sleeve@right_sleeve",
    "put_hem@right_sleeve",
    "grasp_shoulder@shoulders",
    "put_hem@shoulders"
   ]
  },
  {
   "name": "clothes_with_hood_hood_long_TT",
   "oracle": [
    "category = clothes_with_hood",
    "has_hood = true",
    "sleeve = long",
    "leg = not_applicable",
    "part_at_target.left_sleeve = true",
    "part_at_target.right_sleeve = true"
   ],
   "expected": [
    "grasp_hat@hood",
    "put_back@hood",
    "grasp_shoulder@shoulders",
    "put_hem@shoulders"
   ]
  },
  {
   "name": "clothes_with_hood_hood_short_FF",
   "oracle": [
    "category = clothes_with_hood",
    "has_hood = true",
    "sleeve = short",
    "leg = not_applicable",
    "part_at_target.left_sleeve = false",
    "part_at_target.right_sleeve = false"
   ],
   "expected": [
    "grasp_hat@hood",
    "put_back@hood",
    "grasp_sleeve@left_sleeve",
    "put_center@left_sleeve",
    "grasp_sleeve@right_sleeve",
    "put_center@right_sleeve",
    "grasp_shoulder@shoulders",
    "put_hem@shoulders"
   ]
  },
  {
   "name": "shirt_nohood_long_FF",
   "oracle": [
    "category = shirt",
    "has_hood = false",
    "sleeve = long",
    "leg = not_applicable",
    "part_at_target.left_sleeve = false",
    "part_at_target.right_sleeve = false"
   ],
   "expected": [
    "pick@garment",
    "place@garment",
    "grasp_sleeve@left_sleeve",
    "put_hem@left_sleeve",
    "grasp_sleeve@right_sleeve",
    "put_hem@right_sleeve",
    "grasp_shoulder@shoulders",
    "put_hem@shoulders"
   ]
  },
  {
   "name": "shirt_nohood_long_FT",
   "oracle": [
    "category = shirt",
    "has_hood = false",
    "sleeve = long",
    "leg = not_applicable",
    "part_at_target.left_sleeve = false",
    "part_at_target.right_sleeve = true"
   ],
   "expected": [
    "pick@garment",
    "place@garment",
    "grasp_sleeve@left_sleeve",
    "put_hem@left_sleeve",
    "grasp_shoulder@shoulders",
    "put_hem@shoulders"
   ]
  },
  {
   "name": "shirt_nohood_short_TF",
   "oracle": [
    "category = shirt",
    "has_hood = false",
    "sleeve = short",
    "leg = not_applicable",
    "part_at_target.left_sleeve = true",
    "part_at_target.right_sleeve = false"
   ],
   "expected": [
    "pick@garment",
    "place@garment",
    "grasp_sleeve@right_sleeve",
    "put_center@right_sleeve",
    "grasp_shoulder@shoulders",
    "put_hem@shoulders"
   ]
  },
  {
   "name": "t_shirt_nohood_short_FF",
   "oracle": [
    "category = t_shirt",
    "has_hood = false",
    "sleeve = short",
    "leg = not_applicable",
    "part_at_target.left_sleeve = false",
    "part_at_target.right_sleeve = false"
   ],
   "expected": [
    "pick@garment",
    "place@garment",
    "grasp_sleeve@left_sleeve",
    "put_center@left_sleeve",
    "grasp_sleeve@right_sleeve",
    "put_center@right_sleeve",
    "grasp_shoulder@shoulders",
    "put_hem@shoulders"
   ]
  },
  {
   "name": "t_shirt_nohood_short_TT",
   "oracle": [
    "category = t_shirt",
    "has_hood = false",
    "sleeve = short",
    "leg = not_applicable",
    "part_at_target.left_sleeve = true",
    "part_at_target.right_sleeve = true"
   ],
   "expected": [
    "pick@garment",
    "place@garment",
    "grasp_shoulder@shoulders",
    "put_hem@shoulders"
   ]
  },
  {
   "name": "t_shirt_nohood_sleeveless_FF",
   "oracle": [
    "category = t_shirt",
    "has_hood = false",
    "sleeve = sleeveless",
    "leg = not_applicable",
    "part_at_target.left_strap = false",
    "part_at_target.right_strap = false"
   ],
   "expected": [
    "pick@garment",
    "place@garment",
    "grasp_sleeve@left_strap",
    "put_center@left_strap",
    "grasp_sleeve@right_strap",
    "put_center@right_strap",
    "grasp_shoulder@shoulders",
    "put_hem@shoulders"
   ]
  },
  {
   "name": "dress_nohood_sleeveless_TT",
   "oracle": [
    "category = dress",
    "has_hood = false",
    "sleeve = sleeveless",
    "leg = not_applicable",
    "part_at_target.left_strap = true",
    "part_at_target.right_strap = true"
   ],
   "expected": [
    "pick@garment",
    "place@garment",
    "grasp_shoulder@shoulders",
    "put_hem@shoulders"
   ]
  },
  {
   "name": "dress_nohood_long_FF",
   "oracle": [
    "category = dress",
    "has_hood = false",
    "sleeve = long",
    "leg = not_applicable",
    "part_at_target.left_sleeve = false",
    "part_at_target.right_sleeve = false"
   ],
   "expected": [
    "pick@garment",
    "place@garment",
    "grasp_sleeve@left_sleeve",
    "put_hem@left_sleeve",
    "grasp_sleeve@right_sleeve",
    "put_hem@right_sleeve",
    "grasp_shoulder@shoulders",
    "put_hem@shoulders"
   ]
  },
  {
   "name": "dress_hood_short_FT",
   "oracle": [
    "category = dress",
    "has_hood = true",
    "sleeve = short",
    "leg = not_applicable",
    "part_at_target.left_sleeve = false",
    "part_at_target.right_sleeve = true"
   ],
   "expected": [
    "grasp_hat@hood",
    "put_back@hood",
    "grasp_sleeve@left_sleeve",
    "put_center@left_sleeve",
    "grasp_shoulder@shoulders",
    "put_hem@shoulders"
   ]
  },
  {
   "name": "pants_long_legs_misplaced",
   "oracle": [
    "category = pants",
    "sleeve = not_applicable",
    "leg = long",
    "part_at_target.legs = false"
   ],
   "expected": [
    "pick@garment",
    "place@garment",
    "fold_legs_secondary@legs"
   ]
  },
  {
   "name": "pants_long_legs_at_target",
   "oracle": [
    "category = pants",
    "sleeve = not_applicable",
    "leg = long",
    "part_at_target.legs = true"
   ],
   "expected": [
    "pick@garment",
    "place@garment"
   ]
  },
  {
   "name": "pants_short",
   "oracle": [
    "category = pants",
    "sleeve = not_applicable",
    "leg = short"
   ],
   "expected": [
    "pick@garment",
    "place@garment"
   ]
  },
  {
   "name": "towel",
   "oracle": [
    "category = towel",
    "sleeve = not_applicable",
    "leg = not_applicable"
   ],
   "expected": [
    "pick@garment",
    "place@garment",
    "fold_half@towel"
   ]
  }
 ]
})json";
    return parse_cases(nlohmann::json::parse(kTable));
}

std::vector<RoutingCase> parse_cases(const nlohmann::json& j) {
    std::vector<RoutingCase> cases;
    for (const auto& e : j.at("cases")) {
        RoutingCase c;
        c.name = e.at("name").get<std::string>();
        if (e.at("oracle").is_array()) {
            for (const auto& line : e.at("oracle")) c.oracle_script += line.get<std::string>() + "\n";
        } else {
            c.oracle_script = e.at("oracle").get<std::string>();
        }
        c.expected = e.at("expected").get<std::vector<std::string>>();
        cases.push_back(std::move(c));
    }
    return cases;
}

RoutingReport evaluate_routing(const CategoryRegistry& registry, const std::vector<RoutingCase>& cases) {
    RoutingReport report;
    if (cases.empty()) {
        report.warnings.push_back("empty case list: accuracy is vacuously 100%");
        return report;
    }
    int passed = 0;
    for (const auto& c : cases) {
        CaseOutcome o;
        o.name = c.name;
        try {
            ScriptedOracle oracle(c.oracle_script);
            const PlanResult r = plan(oracle, registry);
            for (const auto& a : r.plan) o.produced.push_back(to_string(a));
            o.passed = o.produced == c.expected;
        } catch (const Error& e) {
            o.error = e.what();
        }
        passed += o.passed ? 1 : 0;
        report.cases.push_back(std::move(o));
    }
    report.accuracy = static_cast<double>(passed) / static_cast<double>(cases.size());
    return report;
}

nlohmann::json to_json(const Plan& p) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& a : p) out.push_back({{"verb", a.verb}, {"part", a.target_part}, {"layer", to_string(a.layer)}});
    return out;
}

nlohmann::json to_json(const RoutingReport& r) {
    nlohmann::json j;
    j["accuracy"] = r.accuracy;
    j["total"] = r.cases.size();
    j["passed"] = std::count_if(r.cases.begin(), r.cases.end(), [](const CaseOutcome& c) { return c.passed; });
    j["warnings"] = r.warnings;
    j["cases"] = nlohmann::json::array();
    for (const auto& c : r.cases) {
        nlohmann::json e{{"name", c.name}, {"passed", c.passed}, {"produced", c.produced}};
        if (!c.error.empty()) e["error"] = c.error;
        j["cases"].push_back(std::move(e));
    }
    return j;
}

}  // namespace affordkit::tacot
