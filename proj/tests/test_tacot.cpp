#include <doctest.h>

#include <sys/socket.h>
#include <unistd.h>

#include <functional>
#include <thread>

#include "affordkit/tacot.hpp"

using namespace affordkit;
using namespace affordkit::tacot;

namespace {

std::vector<std::string> compact(const Plan& p) {
    std::vector<std::string> out;
    for (const auto& a : p) out.push_back(to_string(a));
    return out;
}

PlanResult plan_with(const std::string& script) {
    ScriptedOracle o(script);
    return plan(o, CategoryRegistry::defaults());
}

ErrorCode code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return ErrorCode::Io;
}

}  // namespace

TEST_CASE("registry") {
    const auto r = CategoryRegistry::defaults();
    CHECK(classify_root(r.at("tissue")) == Kind::Single);
    CHECK(classify_root(r.at("curtain")) == Kind::Single);
    CHECK(classify_root(r.at("clothes_with_hood")) == Kind::MultiStep);
    CHECK(code_of([&] { r.at("sofa"); }) == ErrorCode::UnknownCategory);
    for (const auto& c : r.categories()) CHECK((c.kind == Kind::Single) == c.single_action.has_value());

    auto ext = r;
    ext.extend(nlohmann::json::parse(R"({"categories": [{"name": "drawer", "kind": "single", "action": "pull"},
                                                        {"name": "skirt", "kind": "multi_step", "garment": "lower_body"}]})"));
    CHECK(ext.at("drawer").single_action == "pull");
    CHECK(ext.at("skirt").garment == GarmentClass::LowerBody);
    CHECK_THROWS_AS(ext.add({"bad", Kind::Single, std::nullopt, GarmentClass::None}), Error);
}

TEST_CASE("single-step categories") {
    auto t = plan_with("category = tissue");
    CHECK(compact(t.plan) == std::vector<std::string>{"pull_out@object"});
    CHECK(t.trace.is_sound());
    CHECK(t.trace.state("tissue") == GateState::Accept);
    CHECK(t.trace.state("pants") == GateState::Reject);
    CHECK(t.trace.state("pants/structure") == GateState::Dormant);
    CHECK(compact(plan_with("category = curtain").plan) == std::vector<std::string>{"pull@object"});
    const auto registry = CategoryRegistry::defaults();
    for (const auto& c : registry.categories()) {
        if (c.kind == Kind::Single) CHECK(plan_with("category = " + c.name).plan.size() == 1);
    }
}

TEST_CASE("garment plans") {
    const auto hooded = plan_with(R"(category = clothes_with_hood
has_hood = true
sleeve = long
leg = not_applicable
part_at_target.left_sleeve = false
part_at_target.right_sleeve = false)");
    CHECK(compact(hooded.plan) ==
          std::vector<std::string>{"grasp_hat@hood", "put_back@hood", "grasp_sleeve@left_sleeve", "put_hem@left_sleeve",
                                   "grasp_sleeve@right_sleeve", "put_hem@right_sleeve", "grasp_shoulder@shoulders",
                                   "put_hem@shoulders"});
    CHECK(hooded.trace.state("clothes_with_hood/structure/flatten") == GateState::Reject);
    CHECK(hooded.trace.state("clothes_with_hood/attribute/short_sleeve") == GateState::Reject);
    CHECK(hooded.trace.state("clothes_with_hood/attribute/short_sleeve/left_sleeve") == GateState::Dormant);
    CHECK(hooded.layers_traversed == 4);

    const auto converged = plan_with(R"(category = t_shirt
has_hood = false
sleeve = short
leg = not_applicable
part_at_target.left_sleeve = true
part_at_target.right_sleeve = true)");
    CHECK(compact(converged.plan) ==
          std::vector<std::string>{"pick@garment", "place@garment", "grasp_shoulder@shoulders", "put_hem@shoulders"});
    CHECK(converged.trace.state("t_shirt/attribute/short_sleeve/left_sleeve") == GateState::Reject);

    const auto pants = plan_with("category = pants\nsleeve = not_applicable\nleg = long\npart_at_target.legs = false");
    CHECK(compact(pants.plan) == std::vector<std::string>{"pick@garment", "place@garment", "fold_legs_secondary@legs"});
    CHECK(pants.layers_traversed == 3);
}

TEST_CASE("inconsistent attributes") {
    CHECK(code_of([] { plan_with("category = towel\nsleeve = long\nleg = not_applicable"); }) ==
          ErrorCode::InconsistentAttributes);
    CHECK(code_of([] { plan_with("category = pants\nsleeve = short\nleg = long"); }) ==
          ErrorCode::InconsistentAttributes);
    CHECK(code_of([] { plan_with("category = shirt\nhas_hood = false\nsleeve = not_applicable\nleg = not_applicable"); }) ==
          ErrorCode::InconsistentAttributes);
    CHECK(code_of([] { plan_with("category = shirt\nhas_hood = false"); }) == ErrorCode::OracleUnavailable);
    CHECK(code_of([] { plan_with("category = sofa"); }) == ErrorCode::UnknownCategory);
}

TEST_CASE("gating") {
    GateTrace t;
    const int a = t.add_node("a", Layer::Type, 0);
    const int b = t.add_node("b", Layer::Type, 0);
    const int a1 = t.add_node("a1", Layer::Structure, a);
    const int a11 = t.add_node("a11", Layer::Attribute, a1);
    t.add_node("b1", Layer::Structure, b);

    const auto rejected = apply_gate(t, "a", Decision::Reject);
    CHECK(rejected.node(a1).state == GateState::Dormant);
    CHECK(rejected.node(a11).state == GateState::Dormant);

    const auto accepted = apply_gate(t, "b", Decision::Accept);
    CHECK(accepted.state("a") == GateState::Reject);
    CHECK(accepted.state("a11") == GateState::Dormant);
    CHECK(accepted.state("b1") == GateState::Undecided);
    CHECK(accepted.is_sound());

    CHECK(code_of([&] { apply_gate(accepted, "b", Decision::Reject); }) == ErrorCode::AlreadyDecided);
    CHECK_FALSE(t.is_sound());  // no Type-layer accept yet
}

TEST_CASE("replan after feedback") {
    const std::string base = R"(category = shirt
has_hood = false
sleeve = long
leg = not_applicable
)";
    const auto r = plan_with(base + "part_at_target.left_sleeve = false\npart_at_target.right_sleeve = false");
    // Execute the first sleeve fold; both sleeves now report at target.
    Plan remaining(r.plan.begin() + 4, r.plan.end());
    ScriptedOracle after(base + "part_at_target.left_sleeve = true\npart_at_target.right_sleeve = true");
    CHECK(compact(replan_after_feedback(remaining, after)) ==
          std::vector<std::string>{"grasp_shoulder@shoulders", "put_hem@shoulders"});

    ScriptedOracle unchanged(base + "part_at_target.left_sleeve = false\npart_at_target.right_sleeve = false");
    CHECK(replan_after_feedback(r.plan, unchanged) == r.plan);

    const auto legs = plan_with("category = pants\nsleeve = not_applicable\nleg = long\npart_at_target.legs = false");
    Plan only_attr(legs.plan.begin() + 2, legs.plan.end());
    ScriptedOracle done("part_at_target.legs = true");
    CHECK(replan_after_feedback(only_attr, done).empty());
}

TEST_CASE("replan never adds or reorders") {
    const auto r = plan_with(R"(category = dress
has_hood = true
sleeve = long
leg = not_applicable
part_at_target.left_sleeve = false
part_at_target.right_sleeve = false)");
    for (int mask = 0; mask < 4; ++mask) {
        ScriptedOracle o;
        o.set("part_at_target.left_sleeve", mask & 1 ? "true" : "false");
        o.set("part_at_target.right_sleeve", mask & 2 ? "true" : "false");
        const auto out = replan_after_feedback(r.plan, o);
        CHECK(out.size() <= r.plan.size());
        std::size_t j = 0;
        for (const auto& a : out) {
            while (j < r.plan.size() && !(r.plan[j] == a)) ++j;
            CHECK(j < r.plan.size());
            ++j;
        }
    }
}

TEST_CASE("bundled routing table") {
    const auto registry = CategoryRegistry::defaults();
    const auto cases = bundled_cases();
    CHECK(cases.size() >= registry.categories().size());
    const auto report = evaluate_routing(registry, cases);
    CHECK(report.accuracy == 1.0);
    for (const auto& c : cases) {
        ScriptedOracle o(c.oracle_script);
        const auto r = plan(o, registry);
        CHECK(r.trace.is_sound());
        CHECK(layer_order_is_monotone(r.plan));
        ScriptedOracle again(c.oracle_script);
        const auto r2 = plan(again, registry);
        CHECK(r2.plan == r.plan);
        CHECK(r2.trace.to_json() == r.trace.to_json());
    }
}

TEST_CASE("routing fault isolation and empty tables") {
    const auto registry = CategoryRegistry::defaults();
    auto cases = bundled_cases();
    std::size_t flipped = 0;
    for (std::size_t i = 0; i < cases.size(); ++i) {
        auto& s = cases[i].oracle_script;
        const auto pos = s.find("has_hood = true");
        if (pos != std::string::npos) {
            s.replace(pos, 15, "has_hood = false");
            flipped = i;
            break;
        }
    }
    const auto report = evaluate_routing(registry, cases);
    for (std::size_t i = 0; i < cases.size(); ++i) CHECK(report.cases[i].passed == (i != flipped));

    const auto empty = evaluate_routing(registry, {});
    CHECK(empty.accuracy == 1.0);
    CHECK(empty.warnings.size() == 1);
}

TEST_CASE("scripted oracle parsing") {
    ScriptedOracle o("# comment\n category = shirt  \nsleeve=long # trailing\n");
    CHECK(o.category() == "shirt");
    CHECK(o.sleeve() == Sleeve::Long);
    CHECK_THROWS_AS(ScriptedOracle("no equals sign"), Error);
    ScriptedOracle bad("has_hood = maybe");
    CHECK_THROWS_AS(bad.has_hood(), Error);
}

TEST_CASE("remote oracle over a socket pair") {
    int fds[2];
    REQUIRE(socketpair(AF_UNIX, SOCK_STREAM, 0, fds) == 0);
    std::thread server([fd = fds[1]] {
        std::string buf;
        char c;
        int served = 0;
        while (served < 5 && read(fd, &c, 1) == 1) {
            if (c != '\n') {
                buf += c;
                continue;
            }
            const auto req = nlohmann::json::parse(buf);
            buf.clear();
            std::string answer;
            const std::string q = req.at("query");
            if (q == "category") answer = "pants";
            if (q == "sleeve") answer = "not_applicable";
            if (q == "leg") answer = "long";
            if (q == "part_at_target") answer = "false";
            const std::string line = nlohmann::json{{"answer", answer}}.dump() + "\n";
            CHECK(write(fd, line.data(), line.size()) == static_cast<ssize_t>(line.size()));
            ++served;
        }
        close(fd);
    });
    {
        RemoteOracle o(fds[0], fds[0], std::chrono::seconds(5), true);
        const auto r = plan(o, CategoryRegistry::defaults());
        CHECK(compact(r.plan) == std::vector<std::string>{"pick@garment", "place@garment", "fold_legs_secondary@legs"});
        CHECK(o.category() == "pants");  // cached, no new request
    }
    server.join();
}

TEST_CASE("remote oracle timeout") {
    int fds[2];
    REQUIRE(socketpair(AF_UNIX, SOCK_STREAM, 0, fds) == 0);
    RemoteOracle o(fds[0], fds[0], std::chrono::milliseconds(50));
    CHECK(code_of([&] { o.category(); }) == ErrorCode::OracleUnavailable);
    close(fds[0]);
    close(fds[1]);
    CHECK(code_of([] { RemoteOracle::connect("127.0.0.1", 1, std::chrono::milliseconds(50)); }) ==
          ErrorCode::OracleUnavailable);
}
