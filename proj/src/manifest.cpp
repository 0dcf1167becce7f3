#include "depflux/manifest.hpp"

#include <cstdio>
#include <cstdlib>
#include <stdexcept>

#include <openssl/evp.h>

#include "json.hpp"

namespace depflux {

std::string git_blob_hash(const std::string& content) {
  const std::string header = "blob " + std::to_string(content.size()) + std::string(1, '\0');
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx) throw std::runtime_error("git_blob_hash: cannot allocate digest context");
  const bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, header.data(), header.size()) == 1 &&
                  EVP_DigestUpdate(ctx, content.data(), content.size()) == 1 &&
                  EVP_DigestFinal_ex(ctx, digest, &len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw std::runtime_error("git_blob_hash: SHA-1 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

std::string make_manifest(const std::string& command, const ExperimentConfig& config,
                          const std::vector<std::string>& outputs, double runtime_seconds) {
  const std::string text = to_text(config);
  nlohmann::json j;
  j["command"] = command;
  j["config_text"] = text;
  j["config_hash"] = git_blob_hash(text);
  nlohmann::json model;
  model["name"] = config.model.name;
  nlohmann::json params = nlohmann::json::object();
  for (const auto& [k, v] : config.model.params) {
    if (const double* d = std::get_if<double>(&v))
      params[k] = *d;
    else
      params[k] = std::get<std::string>(v);
  }
  model["params"] = params;
  nlohmann::json c;
  c["model"] = model;
  if (config.theta) c["theta"] = *config.theta;
  if (config.rho) c["rho"] = *config.rho;
  c["L"] = config.L;
  c["t"] = config.t;
  c["V"] = config.V;
  c["replicates"] = config.replicates;
  c["seed"] = config.seed;
  if (config.checks) c["checks"] = *config.checks;
  c["output"] = config.output;
  c["eps"] = config.eps;
  c["state_cap"] = config.state_cap;
  c["threads"] = config.threads;
  if (config.window) c["window"] = *config.window;
  c["oracle_L"] = config.oracle_L;
  j["config"] = c;
  j["outputs"] = outputs;
  j["runtime_seconds"] = runtime_seconds;
  return j.dump(2) + "\n";
}

CsvWriter::CsvWriter(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  out_.open(path, std::ios::binary);
  if (!out_) throw std::runtime_error("cannot open " + path.string() + " for writing");
}

void CsvWriter::row(const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out_ << ',';
    const std::string& f = fields[i];
    if (f.find_first_of(",\"\n") == std::string::npos) {
      out_ << f;
    } else {
      out_ << '"';
      for (char c : f) {
        if (c == '"') out_ << '"';
        out_ << c;
      }
      out_ << '"';
    }
  }
  out_ << '\n';
  if (!out_) throw std::runtime_error("CSV write failed");
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

}  // namespace depflux
