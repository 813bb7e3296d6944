#pragma once

#include <functional>
#include <string>

#include <json.hpp>

#include "paravmf/evalreport.hpp"

namespace httplib {
class Server;
}

namespace paravmf {

/// Routes of the judging service:
///   GET  /api/session/{id}/next?annotator=NAME
///        200 {"session","item","input","first","second","done","total"} or
///        200 {"session","done","total","finished":true}
///   POST /api/session/{id}/judgment  body {"item","annotator","choice"}
///        200 accepted, 409 duplicate, 404 unknown session or item,
///        403 annotator not on the roster, 400 malformed body
///   GET  /api/session/{id}/report
///        200 vote table and agreement statistics, systems labelled A and B
/// No payload names the systems behind the candidates.
void install_routes(httplib::Server& server, SessionStore& store);

/// Blocks serving the routes on host:port. `on_ready` runs once the port is bound.
void serve(SessionStore& store, const std::string& host, int port, const std::function<void()>& on_ready = {});

nlohmann::json next_payload(const AbSession& session, const SessionStore& store, const std::string& annotator);
nlohmann::json report_payload(const AbReport& report, bool include_names);

}  // namespace paravmf
