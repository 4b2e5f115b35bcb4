#include "chunkstore/chunkstore.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>

namespace wm {

static_assert(std::endian::native == std::endian::little,
              "dataset i/o assumes a little-endian host");

namespace {

constexpr char kStepMagic[4] = {'W', 'M', 'S', 'T'};
constexpr char kChunkMagic[4] = {'W', 'M', 'D', 'S'};
constexpr uint32_t kStepVersion = 1;
constexpr uint32_t kChunkVersion = 1;

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

File open_or_throw(const std::string& path, const char* mode) {
    File f(std::fopen(path.c_str(), mode));
    if (!f) throw std::runtime_error("cannot open: " + path);
    return f;
}

void put(std::FILE* f, const void* p, size_t n) {
    if (std::fwrite(p, 1, n, f) != n) throw std::runtime_error("dataset write failed");
}

void get(std::FILE* f, void* p, size_t n, const std::string& path) {
    if (std::fread(p, 1, n, f) != n)
        throw DatasetIoError(DatasetIoError::Truncated, "truncated dataset: " + path);
}

template <typename T>
void put_v(std::FILE* f, T v) {
    put(f, &v, sizeof v);
}

template <typename T>
T get_v(std::FILE* f, const std::string& path) {
    T v;
    get(f, &v, sizeof v, path);
    return v;
}

void check_header(std::FILE* f, const char magic[4], uint32_t version, const std::string& path) {
    char m[4];
    get(f, m, 4, path);
    if (std::memcmp(m, magic, 4) != 0)
        throw DatasetIoError(DatasetIoError::BadMagic, "bad magic in " + path);
    uint32_t v = get_v<uint32_t>(f, path);
    if (v != version)
        throw DatasetIoError(DatasetIoError::BadVersion,
                             "unsupported version " + std::to_string(v) + " in " + path);
}

}  // namespace

size_t StepDataset::n_steps() const {
    size_t n = 0;
    for (const auto& ep : episodes) n += ep.actions.size();
    return n;
}

std::vector<StepRecord> flatten_steps(const StepDataset& ds) {
    std::vector<StepRecord> out;
    out.reserve(ds.n_steps());
    for (size_t e = 0; e < ds.episodes.size(); ++e) {
        const StepEpisode& ep = ds.episodes[e];
        for (size_t t = 0; t < ep.actions.size(); ++t) {
            StepRecord r;
            r.episode = static_cast<uint32_t>(e);
            r.tick = static_cast<uint32_t>(t);
            r.done = (t + 1 == ep.actions.size()) ? 1 : 0;
            r.state = ep.states[t];
            r.action = ep.actions[t];
            r.reward = ep.rewards[t];
            out.push_back(std::move(r));
        }
    }
    return out;
}

void chunk_sample(const StepEpisode& ep, int t, int H, int K, double gamma, double* S, double* A,
                  double& R, double& mask, double* Sn) {
    const int T = static_cast<int>(ep.actions.size());
    const int sd = static_cast<int>(ep.states[0].size());
    const int ad = static_cast<int>(ep.actions[0].size());
    for (int k = 0; k < K; ++k) {
        const auto& s = ep.states[std::max(t - K + 1 + k, 0)];
        for (int d = 0; d < sd; ++d) S[k * sd + d] = s[d];
    }
    R = 0;
    double g = 1;
    for (int i = 0; i < H; ++i) {
        if (t + i < T) {
            const auto& a = ep.actions[t + i];
            for (int d = 0; d < ad; ++d) A[i * ad + d] = a[d];
            R += g * ep.rewards[t + i];
        } else {
            for (int d = 0; d < ad; ++d) A[i * ad + d] = 0.0;
        }
        g *= gamma;
    }
    mask = (t + H > T) ? 1.0 : 0.0;
    for (int k = 0; k < K; ++k) {
        const auto& s = ep.states[std::min(std::max(t + H - K + 1 + k, 0), T)];
        for (int d = 0; d < sd; ++d) Sn[k * sd + d] = s[d];
    }
}

ChunkDataset relabel_chunks(const StepDataset& ds, int H, int K, double gamma) {
    if (H < 1) throw std::invalid_argument("relabel_chunks: H must be >= 1");
    if (K < 1) throw std::invalid_argument("relabel_chunks: K must be >= 1");
    if (gamma < 0.0 || gamma >= 1.0) throw std::invalid_argument("relabel_chunks: gamma in [0,1)");

    ChunkDataset out;
    out.task = ds.task;
    out.K = static_cast<uint32_t>(K);
    out.H = static_cast<uint32_t>(H);
    out.state_dim = ds.state_dim;
    out.action_dim = ds.action_dim;

    size_t total = 0;
    for (const auto& ep : ds.episodes) {
        if (ep.actions.empty()) throw std::invalid_argument("relabel_chunks: empty episode");
        if (ep.states.size() != ep.actions.size() + 1 || ep.rewards.size() != ep.actions.size())
            throw std::invalid_argument("relabel_chunks: inconsistent episode lengths");
        total += ep.actions.size();
    }
    out.n = total;
    out.data.assign(total * out.stride(), 0.0f);

    const size_t sdim = size_t(K) * ds.state_dim;
    const size_t adim = size_t(H) * ds.action_dim;
    std::vector<double> S(sdim), A(adim), Sn(sdim);
    size_t idx = 0;
    for (const auto& ep : ds.episodes) {
        const int T = static_cast<int>(ep.actions.size());
        for (int t = 0; t < T; ++t, ++idx) {
            double R, mask;
            chunk_sample(ep, t, H, K, gamma, S.data(), A.data(), R, mask, Sn.data());
            float* rec = out.data.data() + idx * out.stride();
            for (size_t k = 0; k < sdim; ++k) rec[k] = static_cast<float>(S[k]);
            for (size_t k = 0; k < adim; ++k)
                rec[out.act_off() + k] = static_cast<float>(A[k]);
            rec[out.ret_off()] = static_cast<float>(R);
            rec[out.mask_off()] = static_cast<float>(mask);
            for (size_t k = 0; k < sdim; ++k) rec[out.next_off() + k] = static_cast<float>(Sn[k]);
        }
    }
    return out;
}

namespace {

void accumulate_stats(const std::vector<const std::vector<double>*>& rows, size_t dim,
                      std::vector<double>& mean, std::vector<double>& stdev) {
    mean.assign(dim, 0.0);
    stdev.assign(dim, 0.0);
    if (rows.empty()) return;
    for (const auto* r : rows)
        for (size_t d = 0; d < dim; ++d) mean[d] += (*r)[d];
    for (size_t d = 0; d < dim; ++d) mean[d] /= static_cast<double>(rows.size());
    for (const auto* r : rows)
        for (size_t d = 0; d < dim; ++d) {
            double u = (*r)[d] - mean[d];
            stdev[d] += u * u;
        }
    for (size_t d = 0; d < dim; ++d)
        stdev[d] = std::max(std::sqrt(stdev[d] / static_cast<double>(rows.size())), 1e-6);
}

}  // namespace

NormStats compute_norm_stats(const StepDataset& ds) {
    if (ds.n_steps() == 0) throw std::invalid_argument("compute_norm_stats: empty dataset");
    std::vector<const std::vector<double>*> srows, arows;
    for (const auto& ep : ds.episodes) {
        for (const auto& s : ep.states) srows.push_back(&s);
        for (const auto& a : ep.actions) arows.push_back(&a);
    }
    NormStats out;
    accumulate_stats(srows, ds.state_dim, out.state_mean, out.state_std);
    accumulate_stats(arows, ds.action_dim, out.action_mean, out.action_std);
    return out;
}

std::vector<double> normalize(const std::vector<double>& x, const std::vector<double>& mean,
                              const std::vector<double>& std) {
    std::vector<double> z(x.size());
    for (size_t i = 0; i < x.size(); ++i) z[i] = (x[i] - mean[i]) / std[i];
    return z;
}

std::vector<double> denormalize(const std::vector<double>& z, const std::vector<double>& mean,
                                const std::vector<double>& std) {
    std::vector<double> x(z.size());
    for (size_t i = 0; i < z.size(); ++i) x[i] = z[i] * std[i] + mean[i];
    return x;
}

nlohmann::json norm_stats_to_json(const NormStats& s) {
    return nlohmann::json{{"state_mean", s.state_mean},
                          {"state_std", s.state_std},
                          {"action_mean", s.action_mean},
                          {"action_std", s.action_std}};
}

NormStats norm_stats_from_json(const nlohmann::json& j) {
    NormStats s;
    j.at("state_mean").get_to(s.state_mean);
    j.at("state_std").get_to(s.state_std);
    j.at("action_mean").get_to(s.action_mean);
    j.at("action_std").get_to(s.action_std);
    return s;
}

void save_steps(const std::string& path, const StepDataset& ds) {
    File f = open_or_throw(path, "wb");
    put(f.get(), kStepMagic, 4);
    put_v(f.get(), kStepVersion);
    put_v(f.get(), ds.task);
    put_v(f.get(), ds.state_dim);
    put_v(f.get(), ds.action_dim);
    put_v(f.get(), static_cast<uint64_t>(ds.episodes.size()));
    for (const auto& ep : ds.episodes) {
        put_v(f.get(), static_cast<uint64_t>(ep.actions.size()));
        put_v(f.get(), static_cast<uint8_t>(ep.success ? 1 : 0));
        put_v(f.get(), static_cast<int32_t>(ep.success_tick));
        for (const auto& s : ep.states) put(f.get(), s.data(), sizeof(double) * ds.state_dim);
        for (const auto& a : ep.actions) put(f.get(), a.data(), sizeof(double) * ds.action_dim);
        put(f.get(), ep.rewards.data(), sizeof(double) * ep.rewards.size());
    }
}

StepDataset load_steps(const std::string& path) {
    File f = open_or_throw(path, "rb");
    check_header(f.get(), kStepMagic, kStepVersion, path);
    StepDataset ds;
    ds.task = get_v<uint32_t>(f.get(), path);
    ds.state_dim = get_v<uint32_t>(f.get(), path);
    ds.action_dim = get_v<uint32_t>(f.get(), path);
    uint64_t n_eps = get_v<uint64_t>(f.get(), path);
    ds.episodes.resize(n_eps);
    for (auto& ep : ds.episodes) {
        uint64_t T = get_v<uint64_t>(f.get(), path);
        ep.success = get_v<uint8_t>(f.get(), path) != 0;
        ep.success_tick = get_v<int32_t>(f.get(), path);
        ep.states.assign(T + 1, std::vector<double>(ds.state_dim));
        ep.actions.assign(T, std::vector<double>(ds.action_dim));
        ep.rewards.assign(T, 0.0);
        for (auto& s : ep.states) get(f.get(), s.data(), sizeof(double) * ds.state_dim, path);
        for (auto& a : ep.actions) get(f.get(), a.data(), sizeof(double) * ds.action_dim, path);
        get(f.get(), ep.rewards.data(), sizeof(double) * T, path);
    }
    return ds;
}

void save_dataset(const std::string& path, const ChunkDataset& ds) {
    File f = open_or_throw(path, "wb");
    put(f.get(), kChunkMagic, 4);
    put_v(f.get(), kChunkVersion);
    put_v(f.get(), ds.task);
    put_v(f.get(), ds.K);
    put_v(f.get(), ds.H);
    put_v(f.get(), ds.state_dim);
    put_v(f.get(), ds.action_dim);
    put_v(f.get(), ds.n);
    put(f.get(), ds.data.data(), sizeof(float) * ds.data.size());
}

ChunkDataset load_dataset(const std::string& path) {
    File f = open_or_throw(path, "rb");
    check_header(f.get(), kChunkMagic, kChunkVersion, path);
    ChunkDataset ds;
    ds.task = get_v<uint32_t>(f.get(), path);
    ds.K = get_v<uint32_t>(f.get(), path);
    ds.H = get_v<uint32_t>(f.get(), path);
    ds.state_dim = get_v<uint32_t>(f.get(), path);
    ds.action_dim = get_v<uint32_t>(f.get(), path);
    ds.n = get_v<uint64_t>(f.get(), path);
    ds.data.resize(ds.n * ds.stride());
    get(f.get(), ds.data.data(), sizeof(float) * ds.data.size(), path);
    return ds;
}

}  // namespace wm
