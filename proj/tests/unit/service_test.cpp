#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>
#include <thread>

#include <httplib.h>

#include "convkit/service/service.hpp"
#include "test_util.hpp"

using namespace convkit;
using namespace convkit::testing;
using nlohmann::json;

namespace {

std::shared_ptr<const runtime::ApiExecutor> mock() {
  return std::make_shared<const runtime::ApiExecutor>(runtime::ApiExecutor::mock(ticketbot()));
}

service::ServiceOptions ephemeral(const std::string& log_dir = "") {
  service::ServiceOptions o;
  o.port = 0;
  o.log_dir = log_dir;
  return o;
}

std::string utter(const std::string& text) { return json{{"utterance", text}}.dump(); }

std::filesystem::path fresh_dir(const std::string& name) {
  auto d = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(d);
  return d;
}

}  // namespace

TEST(Service, HandlersFollowTheDurationCastFlow) {
  service::Service svc(small_ticket_bundle(), mock(), ephemeral());
  auto c = svc.create_session();
  ASSERT_EQ(c.status, 201);
  const auto id = c.body["session_id"].get<std::string>();
  EXPECT_EQ(c.body["welcome_text"], "hi, i can help you with movies. what would you like to do?");

  auto r = svc.post_utterance(id, utter("how long is la la land"), false);
  ASSERT_EQ(r.status, 200);
  EXPECT_EQ(r.body["executed_actions"][0]["action"], "GetDuration");
  EXPECT_EQ(r.body["executed_actions"][0]["args"]["movieTitle"][0], "la la land");
  EXPECT_EQ(r.body["entities"][0]["type"], "Movie");
  EXPECT_FALSE(r.body.contains("debug"));
  EXPECT_EQ(r.body["session_id"], id);

  auto d = svc.post_utterance(id, utter("who stars in it"), true);
  ASSERT_TRUE(d.body.contains("debug"));
  EXPECT_FALSE(d.body["debug"]["steps"].empty());

  auto e = svc.post_utterance(id, utter("exit"), false);
  EXPECT_TRUE(e.body["ended"].get<bool>());
  auto gone = svc.post_utterance(id, utter("hello"), false);
  EXPECT_EQ(gone.status, 410);
  EXPECT_EQ(gone.body["code"], "session_ended");

  auto log = svc.get_log(id);
  ASSERT_EQ(log.status, 200);
  EXPECT_TRUE(log.body["ended"].get<bool>());
  EXPECT_EQ(log.body["records"][0]["session"], id);
  EXPECT_EQ(log.body["records"].back()["event"]["kind"], "end_dialogue");
}

TEST(Service, ErrorReplies) {
  service::Service svc(small_ticket_bundle(), mock(), ephemeral());
  auto nf = svc.post_utterance("s99", utter("hi"), false);
  EXPECT_EQ(nf.status, 404);
  EXPECT_EQ(nf.body["code"], "not_found");
  EXPECT_TRUE(nf.body["message"].is_string());
  EXPECT_EQ(svc.get_log("nope").status, 404);
  const auto id = svc.create_session().body["session_id"].get<std::string>();
  EXPECT_EQ(svc.post_utterance(id, "{not json", false).status, 400);
  EXPECT_EQ(svc.post_utterance(id, R"({"txt":"hi"})", false).status, 400);
  EXPECT_EQ(svc.post_utterance(id, R"({"text":"hi"})", false).status, 200);
  EXPECT_EQ(svc.post_utterance(id, R"({"text":3})", false).body["code"], "bad_request");
}

TEST(Service, HttpRoundTripOnEphemeralPort) {
  service::Service svc(small_ticket_bundle(), mock(), ephemeral());
  const int port = svc.start();
  ASSERT_GT(port, 0);
  httplib::Client cli("127.0.0.1", port);

  auto h = cli.Get("/healthz");
  ASSERT_TRUE(h);
  EXPECT_EQ(h->status, 200);
  EXPECT_EQ(json::parse(h->body)["status"], "ok");
  EXPECT_EQ(h->get_header_value("Access-Control-Allow-Origin"), "*");

  auto c = cli.Post("/sessions", "", "application/json");
  ASSERT_TRUE(c);
  EXPECT_EQ(c->status, 201);
  const auto id = json::parse(c->body)["session_id"].get<std::string>();

  auto u = cli.Post("/sessions/" + id + "/utterances?debug=1", utter("how long is la la land"), "application/json");
  ASSERT_TRUE(u);
  EXPECT_EQ(u->status, 200);
  auto body = json::parse(u->body);
  EXPECT_EQ(body["executed_actions"][0]["action"], "GetDuration");
  EXPECT_TRUE(body.contains("debug"));

  auto l = cli.Get("/sessions/" + id + "/log");
  ASSERT_TRUE(l);
  EXPECT_EQ(json::parse(l->body)["records"].size(), 6u);  // header, welcome, user, call, nlg, end_turn

  auto missing = cli.Get("/nothing/here");
  ASSERT_TRUE(missing);
  EXPECT_EQ(missing->status, 404);
  EXPECT_EQ(json::parse(missing->body)["code"], "not_found");

  auto pre = cli.Options("/sessions");
  ASSERT_TRUE(pre);
  EXPECT_EQ(pre->status, 204);
  svc.stop();
}

TEST(Service, ConcurrentSessionsStayIndependent) {
  service::Service svc(small_ticket_bundle(), mock(), ephemeral());
  const int port = svc.start();
  constexpr int kClients = 4;
  std::atomic<int> ok{0};
  std::vector<std::thread> ts;
  for (int i = 0; i < kClients; ++i) {
    ts.emplace_back([&] {
      httplib::Client cli("127.0.0.1", port);
      auto c = cli.Post("/sessions", "", "application/json");
      if (!c || c->status != 201) return;
      const auto id = json::parse(c->body)["session_id"].get<std::string>();
      bool good = true;
      for (const auto& text : {"how long is la la land", "who stars in it", "exit"}) {
        auto r = cli.Post("/sessions/" + id + "/utterances", utter(text), "application/json");
        good = good && r && r->status == 200;
      }
      auto l = cli.Get("/sessions/" + id + "/log");
      good = good && l && json::parse(l->body)["records"].size() == 13u;  // header and 12 events
      if (good) ++ok;
    });
  }
  for (auto& t : ts) t.join();
  EXPECT_EQ(ok.load(), kClients);
  EXPECT_EQ(svc.health().body["sessions"], kClients);
}

TEST(Service, SameSessionSerializesTurns) {
  service::Service svc(small_ticket_bundle(), mock(), ephemeral());
  const auto id = svc.create_session().body["session_id"].get<std::string>();
  std::vector<std::thread> ts;
  for (int i = 0; i < 4; ++i) {
    ts.emplace_back([&] { svc.post_utterance(id, utter("how long is la la land"), false); });
  }
  for (auto& t : ts) t.join();
  const auto records = svc.get_log(id).body["records"];
  std::size_t users = 0;
  for (std::size_t i = 1; i < records.size(); ++i) {
    EXPECT_EQ(records[i]["seq"], i - 1);
    users += records[i]["event"]["kind"] == "user";
  }
  EXPECT_EQ(users, 4u);
}

TEST(Service, RestartRestoresSessionsFromLogs) {
  const auto dir = fresh_dir("convkit_service_logs");
  std::string id;
  nlohmann::ordered_json before;
  {
    service::Service svc(small_ticket_bundle(), mock(), ephemeral(dir.string()));
    id = svc.create_session().body["session_id"].get<std::string>();
    svc.post_utterance(id, utter("how long is la la land"), false);
    before = svc.get_log(id).body["records"];
  }
  service::Service again(small_ticket_bundle(), mock(), ephemeral(dir.string()));
  EXPECT_EQ(again.restore(), 1u);
  auto log = again.get_log(id);
  ASSERT_EQ(log.status, 200);
  ASSERT_EQ(log.body["records"].size(), before.size());
  for (std::size_t i = 1; i < before.size(); ++i) EXPECT_EQ(log.body["records"][i]["event"], before[i]["event"]);

  // Continues the old session: "it" still refers to the movie.
  auto r = again.post_utterance(id, utter("who stars in it"), false);
  ASSERT_EQ(r.status, 200);
  EXPECT_EQ(r.body["executed_actions"][0]["args"]["movieTitle"][0], "la la land");
  // New sessions do not reuse the restored id.
  EXPECT_NE(again.create_session().body["session_id"], id);
  std::filesystem::remove_all(dir);
}
