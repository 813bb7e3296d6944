#include "paravmf/abserver.hpp"

#include <httplib.h>

#include <spdlog/spdlog.h>

namespace paravmf {

using nlohmann::json;

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json; charset=utf-8");
}

void send_error(httplib::Response& res, int status, std::string_view message) {
  send_json(res, status, json{{"error", message}});
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

json next_payload(const AbSession& session, const SessionStore& store, const std::string& annotator) {
  const std::size_t done = store.judged_count(session.id, annotator);
  json out{{"session", session.id}, {"done", done}, {"total", session.items.size()}};
  const auto next = store.next_item(session.id, annotator);
  if (!next) {
    out["finished"] = true;
    return out;
  }
  const AbItem& item = session.items[*next];
  out["finished"] = false;
  out["item"] = item.id;
  out["input"] = item.input;
  out["first"] = item.first();
  out["second"] = item.second();
  return out;
}

json report_payload(const AbReport& r, bool include_names) {
  const std::string name_a = include_names ? r.system_a : "A";
  const std::string name_b = include_names ? r.system_b : "B";
  json pairs = json::array();
  for (const auto& p : r.agreement.pairs) {
    pairs.push_back({{"annotators", {p.annotator_1, p.annotator_2}},
                     {"items", p.result.items},
                     {"p_o", p.result.p_o},
                     {"p_e", p.result.p_e},
                     {"kappa", optional_number(p.result.kappa)}});
  }
  return json{{"items", r.items},
              {"judged_items", r.judged_items},
              {"agreed", r.agreed},
              {"no_majority", r.no_majority},
              {"systems",
               {{{"name", name_a}, {"votes", r.votes_a}, {"percent", optional_number(r.percent_a)}},
                {{"name", name_b}, {"votes", r.votes_b}, {"percent", optional_number(r.percent_b)}}}},
              {"neither", r.votes_neither},
              {"agreement",
               {{"pairs", pairs},
                {"p_o", r.agreement.p_o},
                {"p_e", r.agreement.p_e},
                {"pairwise_average_kappa", optional_number(r.agreement.average_kappa)}}}};
}

void install_routes(httplib::Server& server, SessionStore& store) {
  server.Get(R"(/api/session/([^/]+)/next)", [&store](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    const auto session = store.session(id);
    if (!session) return send_error(res, 404, "unknown session");
    const std::string annotator = req.get_param_value("annotator");
    if (annotator.empty()) return send_error(res, 400, "annotator query parameter is required");
    if (!session->has_annotator(annotator)) {
      return send_error(res, 403, status_message(JudgmentStatus::UnknownAnnotator));
    }
    send_json(res, 200, next_payload(*session, store, annotator));
  });

  server.Post(R"(/api/session/([^/]+)/judgment)", [&store](const httplib::Request& req, httplib::Response& res) {
    JudgmentRecord rec;
    rec.session = req.matches[1];
    try {
      const json body = json::parse(req.body);
      const json& item = body.at("item");
      if (!item.is_number_unsigned()) throw FormatError("item must be a non-negative integer");
      rec.item = item.get<std::size_t>();
      rec.annotator = body.at("annotator").get<std::string>();
      rec.choice = parse_choice(body.at("choice").get<std::string>());
    } catch (const std::exception& e) {
      return send_error(res, 400, std::string("malformed judgment: ") + e.what());
    }
    const JudgmentStatus status = store.record(rec);
    switch (status) {
      case JudgmentStatus::Accepted:
        return send_json(res, 200, json{{"status", "accepted"}, {"item", rec.item}});
      case JudgmentStatus::Duplicate: return send_error(res, 409, status_message(status));
      case JudgmentStatus::UnknownSession:
      case JudgmentStatus::UnknownItem: return send_error(res, 404, status_message(status));
      case JudgmentStatus::UnknownAnnotator: return send_error(res, 403, status_message(status));
    }
  });

  server.Get(R"(/api/session/([^/]+)/report)", [&store](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    const auto session = store.session(id);
    if (!session) return send_error(res, 404, "unknown session");
    // One snapshot of the log, so concurrent votes cannot tear the report.
    const auto judgments = store.judgments(id);
    AbReportOptions opt;
    opt.force = true;
    json body = report_payload(ab_report(*session, judgments, opt), /*include_names=*/false);
    body["complete"] = session_complete(*session, judgments);
    send_json(res, 200, body);
  });

  server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      spdlog::error("request failed: {}", e.what());
      send_error(res, 500, e.what());
    }
  });
}

void serve(SessionStore& store, const std::string& host, int port, const std::function<void()>& on_ready) {
  httplib::Server server;
  install_routes(server, store);
  if (!server.bind_to_port(host, port)) throw Error("cannot listen on " + host + ":" + std::to_string(port));
  if (on_ready) on_ready();
  server.listen_after_bind();
}

}  // namespace paravmf
