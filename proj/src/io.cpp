#include "endodyn/io.hpp"

#include "endodyn/errors.hpp"

#include <cstdio>
#include <fstream>

namespace endodyn {

std::string format_g17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void atomic_write(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot open for writing: " + tmp.string());
        out << content;
        if (!out) throw Error("write failure: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::string trajectory_csv(const Trajectory& traj) {
    std::string out = "step";
    for (int i = 0; i < traj.m; ++i) out += ",agent_" + std::to_string(i);
    out += "\n";
    for (std::size_t k = 0; k < traj.states.size(); ++k) {
        out += std::to_string(k);
        for (double v : traj.states[k]) {
            out += ",";
            out += format_g17(v);
        }
        out += "\n";
    }
    return out;
}

}  // namespace endodyn
