#include "doctest.h"

#include "timely/io.hpp"
#include "timely/review.hpp"

#include "httplib.h"

#include <fstream>
#include <thread>

using namespace timely;
using namespace timely::review;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

ConsistencyReport fixture() {
    ConsistencyReport r;
    r.states = {"A", "B", "C"};
    r.cells = {{"a", 0, 0, false, 0.0, 0, ""},
               {"b", 1, 0, true, 0.3, 0, "b.png"},
               {"c", 1, 1, false, 0.5, 0, ""},
               {"d", 2, 2, false, 0.9, 0, ""},
               {"e", 0, 2, true, 1.0, 0, ""}};
    r.borders = {{0, 0, 1, 0.4}, {0, 1, 2, 0.7}};
    r.params = default_params(chain_topology(3), symmetric_emission(3, 0.8));
    return r;
}

struct TempDir {
    fs::path path;
    TempDir() {
        char tmpl[] = "/tmp/timely-review-XXXXXX";
        path = mkdtemp(tmpl);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::vector<std::string> export_rows(const ReviewService& s) {
    std::istringstream in(s.export_csv().body);
    std::vector<std::string> rows;
    for (std::string line; std::getline(in, line);) rows.push_back(line);
    return rows;
}

}  // namespace

TEST_CASE("read endpoints") {
    TempDir dir;
    ReviewService s(fixture(), dir.path / "s.jsonl", {{"b", {3.0, 4.0}}});
    auto ds = json::parse(s.dataset().body);
    CHECK(ds["session_id"] == "s");
    CHECK(ds["cells"].size() == 5);
    CHECK(ds["borders"].size() == 2);
    CHECK(ds["cells"][1]["final_label"] == 2);
    CHECK(ds["cells"][1]["decision"].is_null());

    auto b = json::parse(s.cell("b").body);
    CHECK(b["prev"] == "a");
    CHECK(b["next"] == "c");
    CHECK(b["inferred_label"] == 1);
    CHECK(b["feature_summary"]["norm"] == 5.0);
    CHECK(json::parse(s.cell("a").body)["prev"].is_null());
    CHECK(json::parse(s.cell("e").body)["next"].is_null());
    CHECK(s.cell("zz").status == 404);
    CHECK(json::parse(s.borders().body).size() == 2);
}

TEST_CASE("decisions and export") {
    TempDir dir;
    std::int64_t now = 1000;
    ReviewService s(fixture(), dir.path / "s.jsonl", {}, [&] { return now; });
    CHECK(export_rows(s) == std::vector<std::string>{"id,observed_label,final_label,decision", "a,1,1,none", "b,2,2,none",
                                                     "c,2,2,none", "d,3,3,none", "e,1,1,none"});

    auto r = s.decide(R"({"cell_id":"b","decision":"accept_proposed"})");
    CHECK(r.status == 200);
    CHECK(json::parse(r.body)["final_label"] == 1);
    CHECK(s.decide(R"({"cell_id":"e","decision":"custom","custom_label":"B"})").status == 200);
    CHECK(s.decide(R"({"cell_id":"d","decision":"custom","custom_label":3})").status == 200);
    CHECK(export_rows(s)[2] == "b,2,1,accept_proposed");
    CHECK(export_rows(s)[5] == "e,1,2,custom");

    now = 2000;
    CHECK(s.decide(R"({"cell_id":"b","decision":"keep_observed"})").status == 200);
    CHECK(export_rows(s)[2] == "b,2,2,keep_observed");

    SUBCASE("rejections") {
        CHECK(s.decide("not json").status == 422);
        CHECK(s.decide(R"({"cell_id":"b"})").status == 422);
        CHECK(s.decide(R"({"cell_id":"b","decision":"maybe"})").status == 422);
        CHECK(s.decide(R"({"cell_id":"b","decision":"custom"})").status == 422);
        CHECK(s.decide(R"({"cell_id":"b","decision":"custom","custom_label":4})").status == 422);
        CHECK(s.decide(R"({"cell_id":"b","decision":"custom","custom_label":0})").status == 422);
        CHECK(s.decide(R"({"cell_id":"b","decision":"keep_observed","custom_label":1})").status == 422);
        CHECK(s.decide(R"({"cell_id":"zz","decision":"keep_observed"})").status == 404);
        CHECK(export_rows(s)[2] == "b,2,2,keep_observed");
    }
}

TEST_CASE("replay restores decisions with latest-wins") {
    TempDir dir;
    const fs::path log = dir.path / "s.jsonl";
    std::int64_t now = 50;
    {
        ReviewService s(fixture(), log, {}, [&] { return now; });
        s.decide(R"({"cell_id":"a","decision":"custom","custom_label":2})");
        s.decide(R"({"cell_id":"b","decision":"accept_proposed"})");
        now = 40;  // clock stepped back, so this later write loses to the earlier one
        s.decide(R"({"cell_id":"a","decision":"keep_observed"})");
        s.decide(R"({"cell_id":"c","decision":"custom","custom_label":"C"})");
    }
    ReviewService again(fixture(), log);
    auto d = again.decisions();
    REQUIRE(d.size() == 3);
    CHECK(d.at("a").decision == Decision::custom);
    CHECK(d.at("b").decision == Decision::accept_proposed);
    CHECK(*d.at("c").custom_label == 2);
    CHECK(again.final_labels() == std::vector<int>{1, 0, 2, 2, 0});

    // New records continue the sequence.
    auto ack = json::parse(again.decide(R"({"cell_id":"d","decision":"keep_observed"})").body);
    CHECK(ack["seq"] == 4);
}

TEST_CASE("session log tolerates only a torn tail") {
    TempDir dir;
    const fs::path log = dir.path / "s.jsonl";
    SessionLog sl(log);
    sl.append({"a", Decision::keep_observed, std::nullopt, 1, 0});
    sl.append({"b", Decision::custom, 2, 2, 1});
    {
        std::ofstream out(log, std::ios::app);
        out << R"({"seq":2,"timestamp":3,"cell_)";
    }
    auto recs = sl.replay();
    REQUIRE(recs.size() == 2);
    CHECK(recs[1].custom_label == 2);

    {
        std::ofstream out(log, std::ios::app);
        out << "\n{\"seq\":3}\n";
    }
    CHECK_THROWS_AS(sl.replay(), ParseError);
    CHECK(SessionLog(dir.path / "missing.jsonl").replay().empty());
}

TEST_CASE("failed append is not acknowledged") {
    TempDir dir;
    ReviewService s(fixture(), dir.path / "nodir" / "s.jsonl");
    auto r = s.decide(R"({"cell_id":"a","decision":"keep_observed"})");
    CHECK(r.status == 500);
    CHECK(s.decisions().empty());
}

TEST_CASE("http routes") {
    TempDir dir;
    ReviewService s(fixture(), dir.path / "s.jsonl");
    httplib::Server server;
    mount(server, s);
    const int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread th([&] { server.listen_after_bind(); });
    server.wait_until_ready();
    httplib::Client client("127.0.0.1", port);

    auto ds = client.Get("/api/dataset");
    REQUIRE(ds);
    CHECK(ds->status == 200);
    CHECK(json::parse(ds->body)["cells"].size() == 5);
    auto cell = client.Get("/api/cell/b");
    REQUIRE(cell);
    CHECK(json::parse(cell->body)["id"] == "b");
    CHECK(client.Get("/api/cell/none")->status == 404);
    auto post = client.Post("/api/decision", R"({"cell_id":"b","decision":"accept_proposed"})", "application/json");
    REQUIRE(post);
    CHECK(post->status == 200);
    CHECK(client.Post("/api/decision", "{}", "application/json")->status == 422);
    auto exp = client.Get("/api/export");
    REQUIRE(exp);
    CHECK(exp->get_header_value("Content-Type") == "text/csv");
    CHECK(exp->body.find("b,2,1,accept_proposed") != std::string::npos);

    server.stop();
    th.join();
}
