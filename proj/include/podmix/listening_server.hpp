#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <string>

#include "json.hpp"
#include "podmix/error.hpp"
#include "podmix/listening.hpp"

// after Eigen: <resolv.h> defines a `_res` macro that clashes with Eigen internals
#include "httplib.h"

namespace podmix::listening {

inline int http_status(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kNotFound: return 404;
    case ErrorKind::kValidation:
    case ErrorKind::kParameter:
    case ErrorKind::kConfig:
    case ErrorKind::kFormat: return 400;
    default: return 500;
  }
}

namespace detail {

inline void send_error(httplib::Response& res, int status, const std::string& message) {
  res.status = status;
  res.set_content(nlohmann::json{{"error", message}}.dump(), "application/json");
}

template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    send_error(res, http_status(e.kind()), e.what());
  } catch (const nlohmann::json::exception& e) {
    send_error(res, 400, std::string("malformed request: ") + e.what());
  } catch (const std::exception& e) {
    send_error(res, 500, e.what());
  }
}

inline std::uint64_t parse_seed(const std::string& text) {
  std::size_t used = 0;
  std::uint64_t v = 0;
  try {
    v = std::stoull(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size()) {
    throw Error(ErrorKind::kValidation, "seed must be a non-negative integer");
  }
  return v;
}

}  // namespace detail

/// Registers the JSON API on `server`; serves `static_dir` at "/" when given.
inline void mount_routes(httplib::Server& server, ListeningTestService& service,
                         const std::optional<std::filesystem::path>& static_dir = std::nullopt) {
  server.Get("/api/session", [&service](const httplib::Request& req, httplib::Response& res) {
    detail::guarded(res, [&] {
      const std::string part_text = req.get_param_value("part");
      if (part_text != "1" && part_text != "2") {
        throw Error(ErrorKind::kValidation, "part must be 1 or 2");
      }
      std::uint64_t seed = 0;
      if (req.has_param("seed")) {
        seed = detail::parse_seed(req.get_param_value("seed"));
      } else {
        seed = std::random_device{}();
      }
      const Session s =
          service.create_session(part_text == "1" ? 1 : 2, seed, req.get_param_value("participant"));
      res.set_content(session_descriptor(s, service.config()).dump(), "application/json");
    });
  });

  server.Get(R"(/api/audio/([^/]+)/([^/]+))",
             [&service](const httplib::Request& req, httplib::Response& res) {
               detail::guarded(res, [&] {
                 const auto path = service.stimulus_path(req.matches[1], req.matches[2]);
                 std::ifstream in(path, std::ios::binary);
                 if (!in) throw Error(ErrorKind::kIo, "cannot read " + path.string());
                 std::string bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
                 res.set_content(std::move(bytes), "audio/wav");
               });
             });

  server.Post("/api/ratings", [&service](const httplib::Request& req, httplib::Response& res) {
    detail::guarded(res, [&] {
      const auto body = nlohmann::json::parse(req.body);
      std::vector<RatingInput> ratings;
      for (const auto& r : body.at("ratings")) {
        if (!r.at("value").is_number()) {
          throw Error(ErrorKind::kValidation, "rating values must be numbers");
        }
        ratings.push_back({r.at("stimulus_id").get<std::string>(),
                           r.at("metric").get<std::string>(), r.at("value").get<double>()});
      }
      const std::size_t stored =
          service.record_ratings(body.at("session_id").get<std::string>(),
                                 body.at("excerpt_id").get<std::string>(), ratings);
      res.set_content(nlohmann::json{{"stored", stored}}.dump(), "application/json");
    });
  });

  server.Get("/api/results", [&service](const httplib::Request&, httplib::Response& res) {
    detail::guarded(res, [&] {
      res.set_content(to_json(service.results()).dump(), "application/json");
    });
  });

  if (static_dir) {
    if (!server.set_mount_point("/", static_dir->string())) {
      throw Error(ErrorKind::kIo, "static directory not found: " + static_dir->string());
    }
  }
}

}  // namespace podmix::listening
