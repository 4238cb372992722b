#include "scm/service.hpp"

#include <charconv>
#include <cmath>
#include <thread>
#include <vector>

// Last: it drags in <resolv.h>, whose _res macro breaks Eigen.
#include <httplib.h>

#include "core/errors.hpp"

namespace scaletwin {

using nlohmann::json;

namespace {

ScmResponse fail(int status, const std::string& code, const std::string& message) {
  return {status, {{"error", {{"code", code}, {"message", message}}}}};
}

std::vector<std::string_view> split_path(std::string_view path) {
  std::vector<std::string_view> parts;
  while (!path.empty()) {
    if (path.front() == '/') {
      path.remove_prefix(1);
      continue;
    }
    const auto end = path.find('/');
    parts.push_back(path.substr(0, end));
    if (end == std::string_view::npos) break;
    path.remove_prefix(end);
  }
  return parts;
}

int status_for(const std::string& bridge_code) {
  if (bridge_code == code::kNotFound) return 404;
  if (bridge_code == code::kInvalidState) return 422;
  if (bridge_code == code::kBadRequest) return 400;
  if (bridge_code == code::kForbidden) return 403;
  return 502;
}

}  // namespace

ScmService::ScmService(const ScmDatabase& db, ScmRequester requester) : db_(db), requester_(std::move(requester)) {}

ScmResponse ScmService::forward(Envelope e) const {
  if (db_.stale()) return fail(503, "STALE", "not connected to the bridge");
  Envelope reply;
  try {
    reply = requester_(std::move(e));
  } catch (const NetworkError& ex) {
    return fail(504, "TIMEOUT", ex.what());
  }
  json body = reply.payload;
  const std::string c = body.value("code", "");
  if (reply.type == msg::kErr) return fail(status_for(c), c, body.value("message", ""));
  body.erase("request");
  return {200, body};
}

ScmResponse ScmService::handle(std::string_view method, std::string_view path,
                               const std::multimap<std::string, std::string>& query, std::string_view body) const {
  const auto parts = split_path(path);
  const bool read = method == "GET";
  const bool write = method == "PUT" || method == "POST";
  if (parts.empty()) return fail(404, "NOT_FOUND", "no such endpoint");
  const std::string_view root = parts[0];

  if (root == "vehicles" && parts.size() == 1) {
    if (!read) return fail(405, "METHOD", "use GET");
    json list = json::array();
    for (const auto& v : db_.vehicles()) list.push_back(to_json(v));
    return {200, {{"tick", db_.tick()}, {"timestamp", db_.sim_time()}, {"stale", db_.stale()}, {"vehicles", list}}};
  }
  if (root == "elements" && parts.size() == 1) {
    if (!read) return fail(405, "METHOD", "use GET");
    json list = json::array();
    for (const auto& e : db_.elements()) list.push_back(to_json(e));
    return {200, {{"stale", db_.stale()}, {"elements", list}}};
  }
  if (root == "events" && parts.size() == 1) {
    if (!read) return fail(405, "METHOD", "use GET");
    double since = -std::numeric_limits<double>::infinity();
    if (auto it = query.find("since"); it != query.end()) {
      const std::string& s = it->second;
      auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), since);
      if (ec != std::errc() || end != s.data() + s.size() || std::isnan(since))
        return fail(400, "BAD_REQUEST", "'since' must be a number of seconds");
    }
    json list = json::array();
    for (const auto& e : db_.events_since(since)) list.push_back(to_json(e));
    return {200, {{"now", db_.session_time()}, {"events", list}}};
  }

  if ((root != "vehicles" && root != "elements") || parts.size() > 3) return fail(404, "NOT_FOUND", "no such endpoint");
  const std::string id(parts[1]);
  const bool is_vehicle = root == "vehicles";
  if (is_vehicle ? !db_.vehicle(id) : !db_.element(id))
    return fail(404, "NOT_FOUND", std::string(is_vehicle ? "unknown vehicle '" : "unknown element '") + id + "'");

  if (parts.size() == 2) {
    if (!read) return fail(405, "METHOD", "use GET");
    return {200, is_vehicle ? to_json(*db_.vehicle(id)) : to_json(*db_.element(id))};
  }
  const std::string_view leaf = parts[2];
  if (leaf != (is_vehicle ? "mode" : "state")) return fail(404, "NOT_FOUND", "no such endpoint");
  if (!write) return fail(405, "METHOD", "use PUT or POST");

  json request;
  try {
    request = json::parse(body);
  } catch (const json::parse_error& ex) {
    return fail(400, "BAD_REQUEST", std::string("body is not JSON: ") + ex.what());
  }
  const std::string field(leaf);
  if (!request.is_object() || !request.contains(field) || !request[field].is_string())
    return fail(400, "BAD_REQUEST", "body must be {\"" + field + "\": string}");
  const std::string value = request[field].get<std::string>();

  Envelope e;
  if (is_vehicle) {
    if (!drive_mode_from_string(value)) return fail(422, code::kInvalidState, "mode must be 'manual' or 'autonomous'");
    e.type = msg::kMode;
    e.vehicle_id = id;
    e.payload = {{"mode", value}};
  } else {
    const auto el = db_.element(id);
    const auto state = light_state_from_string(value);
    if (el->kind != ElementKind::kTrafficLight)
      return fail(422, code::kInvalidState, "'" + id + "' is a " + std::string(to_string(el->kind)) + " and has no state");
    if (!state || *state == LightState::kNone)
      return fail(422, code::kInvalidState, "light state must be red, yellow or green");
    e.type = msg::kScmEvent;
    e.payload = {{"element", id}, {"state", value}};
  }
  return forward(std::move(e));
}

struct ScmHttpServer::Impl {
  httplib::Server server;
  std::thread thread;
  int port = 0;
};

ScmHttpServer::ScmHttpServer(const ScmService& service, const HostPort& bind) : impl_(std::make_unique<Impl>()) {
  auto handler = [&service](const httplib::Request& req, httplib::Response& res) {
    std::multimap<std::string, std::string> query(req.params.begin(), req.params.end());
    const ScmResponse r = service.handle(req.method, req.path, query, req.body);
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  impl_->server.Get(".*", handler);
  impl_->server.Put(".*", handler);
  impl_->server.Post(".*", handler);
  impl_->server.Delete(".*", handler);

  impl_->port = bind.port == 0 ? impl_->server.bind_to_any_port(bind.host)
                               : (impl_->server.bind_to_port(bind.host, bind.port) ? bind.port : -1);
  if (impl_->port <= 0)
    throw NetworkError("cannot bind the SCM API to " + bind.host + ":" + std::to_string(bind.port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
}

ScmHttpServer::~ScmHttpServer() { stop(); }

std::uint16_t ScmHttpServer::port() const { return static_cast<std::uint16_t>(impl_->port); }

void ScmHttpServer::stop() {
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace scaletwin
