#include "momaworld/world.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "core/rng.hpp"

namespace wm {

namespace {

constexpr double kPi = 3.14159265358979323846;

double clampd(double v, double lo, double hi) { return std::min(std::max(v, lo), hi); }

Vec2 rot(double th, Vec2 v) {
    double c = std::cos(th), s = std::sin(th);
    return {c * v.x - s * v.y, s * v.x + c * v.y};
}

Vec2 perp(Vec2 v) { return {-v.y, v.x}; }

Vec2 closest_on_segment(Vec2 c, const Segment& s) {
    Vec2 d = s.b - s.a;
    double len2 = dot(d, d);
    double t = len2 > 0 ? clampd(dot(c - s.a, d) / len2, 0.0, 1.0) : 0.0;
    return s.a + t * d;
}

}  // namespace

const char* task_name(Task t) {
    switch (t) {
        case Task::Door: return "door";
        case Task::Drawer: return "drawer";
        default: return "cupboard";
    }
}

Task task_from_name(const std::string& name) {
    if (name == "door") return Task::Door;
    if (name == "drawer") return Task::Drawer;
    if (name == "cupboard") return Task::Cupboard;
    throw std::invalid_argument("unknown task: " + name);
}

TaskSpec TaskSpec::make(Task t) {
    TaskSpec s;
    s.kind = t;
    s.horizon = t == Task::Door ? 600 : 900;
    s.dt = wk::kDt;
    return s;
}

Vec2 mount_pos(const RobotState& r, int arm) {
    return Vec2{r.x, r.y} + rot(r.th, {0.0, wk::kMountY[arm]});
}

EePose fk_ee(const RobotState& r, int arm) {
    Vec2 p = mount_pos(r, arm);
    double a = r.th;
    for (int k = 0; k < 3; ++k) {
        a += r.arm[arm][k];
        p = p + wk::kLink[k] * Vec2{std::cos(a), std::sin(a)};
    }
    return {p, a};
}

Matd jacobian_ee(const RobotState& r, int arm) {
    Matd J(2, 9);
    J.fill(0.0);
    EePose ee = fk_ee(r, arm);
    J.at(0, 0) = 1.0;
    J.at(1, 1) = 1.0;
    Vec2 rb = perp(ee.p - Vec2{r.x, r.y});
    J.at(0, 2) = rb.x;
    J.at(1, 2) = rb.y;
    // joint k origin: mount for k=0, then successive link ends
    Vec2 o = mount_pos(r, arm);
    double a = r.th;
    for (int k = 0; k < 3; ++k) {
        Vec2 rj = perp(ee.p - o);
        J.at(0, 3 + 3 * arm + k) = rj.x;
        J.at(1, 3 + 3 * arm + k) = rj.y;
        a += r.arm[arm][k];
        o = o + wk::kLink[k] * Vec2{std::cos(a), std::sin(a)};
    }
    return J;
}

int target_count(Task t) {
    switch (t) {
        case Task::Door: return 1;
        case Task::Drawer: return 2;
        default: return 2;  // handle + carried object
    }
}

double articulation_max(Task t, int id) {
    switch (t) {
        case Task::Door: return wk::kDoorMax;
        case Task::Drawer: return wk::kDrawerMax;
        default: return id == 0 ? wk::kCupMax : 0.0;
    }
}

Vec2 handle_pos(const WorldState& w, int id) {
    switch (w.task) {
        case Task::Door:
            return wk::kDoorHandleR * Vec2{std::cos(w.q[0]), std::sin(w.q[0])};
        case Task::Drawer:
            return {wk::kDrawerHandleX[id], wk::kDrawerFaceY - w.q[id]};
        default:
            if (id == 1) return w.object;
            return Vec2{wk::kCupHingeX, 0.0} +
                   wk::kCupLeaf * Vec2{std::cos(w.q[0]), -std::sin(w.q[0])};
    }
}

Vec2 handle_tangent(const WorldState& w, int id) {
    switch (w.task) {
        case Task::Door:
            return {-std::sin(w.q[0]), std::cos(w.q[0])};
        case Task::Drawer:
            (void)id;
            return {0.0, -1.0};
        default:
            return {-std::sin(w.q[0]), -std::cos(w.q[0])};
    }
}

std::vector<Segment> collision_segments(const WorldState& w) {
    std::vector<Segment> segs;
    switch (w.task) {
        case Task::Door:
            segs.push_back({{-2.5, 0.0}, {0.0, 0.0}});
            segs.push_back({{wk::kDoorLeaf, 0.0}, {2.5, 0.0}});
            segs.push_back({{0.0, 0.0},
                            wk::kDoorLeaf * Vec2{std::cos(w.q[0]), std::sin(w.q[0])}});
            break;
        case Task::Drawer:
            segs.push_back({{-2.5, 0.0}, {2.5, 0.0}});
            break;
        default: {
            Vec2 hinge{wk::kCupHingeX, 0.0};
            segs.push_back({{-2.5, 0.0}, hinge});
            segs.push_back({{hinge.x + wk::kCupLeaf, 0.0}, {2.5, 0.0}});
            segs.push_back({hinge, hinge + wk::kCupLeaf * Vec2{std::cos(w.q[0]),
                                                               -std::sin(w.q[0])}});
            break;
        }
    }
    return segs;
}

WorldState reset(const TaskSpec& spec, uint64_t seed, double joint_noise_sigma) {
    if (joint_noise_sigma < 0) throw std::invalid_argument("reset: sigma must be >= 0");
    WorldState w;
    w.task = spec.kind;
    w.seed = seed;
    w.robot.th = kPi / 2;
    w.robot.arm[0] = {0.3, -0.6, 0.3};
    w.robot.arm[1] = {-0.3, 0.6, -0.3};
    switch (spec.kind) {
        case Task::Door:
            w.robot.x = 0.4;
            w.robot.y = -1.1;
            break;
        case Task::Drawer:
            w.robot.x = 0.0;
            w.robot.y = -0.9;
            w.q[0] = 0.30;  // drawer A starts open, must be pushed shut
            break;
        default:
            w.robot.x = 0.0;
            w.robot.y = -1.0;
            w.robot.grip[1] = 1.0;
            break;
    }
    Rng rng(mix_seed(seed, 0x77F0A2D1u));
    for (int a = 0; a < 2; ++a)
        for (int k = 0; k < 3; ++k)
            w.robot.arm[a][k] = clampd(w.robot.arm[a][k] + joint_noise_sigma * rng.normal(),
                                       -wk::kJointLim, wk::kJointLim);
    if (spec.kind == Task::Cupboard) {
        w.attach[1] = 1;  // object pre-attached to right gripper
        w.grasped_ever[1] = true;
        w.object = fk_ee(w.robot, 1).p;
    }
    return w;
}

// Damped-least-squares arm IK toward a world target; joints clamped to
// position limits. Returns true when the end effector lands on the target.
bool arm_ik(const RobotState& base_pose, int arm, Vec2 target, std::array<double, 3>& q) {
    RobotState r = base_pose;
    for (int it = 0; it < 200; ++it) {
        r.arm[arm] = q;
        Vec2 err = target - fk_ee(r, arm).p;
        if (norm(err) < 1e-12) return true;
        Matd J = jacobian_ee(r, arm);
        double j[2][3];
        for (int k = 0; k < 3; ++k) {
            j[0][k] = J.at(0, 3 + 3 * arm + k);
            j[1][k] = J.at(1, 3 + 3 * arm + k);
        }
        double a00 = 1e-9, a01 = 0, a11 = 1e-9;
        for (int k = 0; k < 3; ++k) {
            a00 += j[0][k] * j[0][k];
            a01 += j[0][k] * j[1][k];
            a11 += j[1][k] * j[1][k];
        }
        double det = a00 * a11 - a01 * a01;
        if (det <= 0) return false;
        double v0 = (a11 * err.x - a01 * err.y) / det;
        double v1 = (a00 * err.y - a01 * err.x) / det;
        double dq[3], mx = 0;
        for (int k = 0; k < 3; ++k) {
            dq[k] = j[0][k] * v0 + j[1][k] * v1;
            mx = std::max(mx, std::abs(dq[k]));
        }
        double scale = mx > 0.2 ? 0.2 / mx : 1.0;
        for (int k = 0; k < 3; ++k)
            q[k] = clampd(q[k] + scale * dq[k], -wk::kJointLim, wk::kJointLim);
    }
    r.arm[arm] = q;
    return norm(target - fk_ee(r, arm).p) < 1e-9;
}

namespace {

}  // namespace

StepEvents step(WorldState& w, const std::vector<double>& action) {
    if (action.size() != static_cast<size_t>(wk::kActionDim))
        throw std::invalid_argument("step: action must have 11 entries");
    for (double v : action)
        if (!std::isfinite(v)) throw std::invalid_argument("step: non-finite action");

    StepEvents ev;
    bool success_before = check_status(w).success;
    const double dt = wk::kDt;

    double u[9];
    for (int i = 0; i < 3; ++i) u[i] = clampd(action[i], -wk::kBaseVel[i], wk::kBaseVel[i]);
    for (int i = 0; i < 6; ++i) u[3 + i] = clampd(action[3 + i], -wk::kJointVel, wk::kJointVel);
    double gcmd[2] = {clampd(action[9], 0.0, 1.0), clampd(action[10], 0.0, 1.0)};

    // Gripper commands and detach transitions happen before motion so an arm
    // released this tick no longer drives the articulation.
    for (int a = 0; a < 2; ++a) {
        bool was_closed = w.robot.grip[a] >= wk::kGripClose;
        bool wants_open = gcmd[a] < wk::kGripClose;
        if (w.attach[a] >= 0 && was_closed && wants_open) {
            bool blocked = w.task == Task::Cupboard && w.attach[a] == 1 &&
                           w.q[0] < wk::kCupReleaseAngle && w.object.y > 0.0;
            if (blocked) {
                ev.release_blocked = true;
                continue;  // gripper refuses to open inside a closed cupboard
            }
            w.attach[a] = -1;
            ev.release = true;
        }
        w.robot.grip[a] = gcmd[a];
    }

    // Base translation with circle-vs-segment pushout, then a per-axis cap so
    // the realized displacement never exceeds the velocity limit.
    Vec2 old_c{w.robot.x, w.robot.y};
    Vec2 c = old_c + dt * Vec2{u[0], u[1]};
    auto segs = collision_segments(w);
    for (int pass = 0; pass < 4; ++pass) {
        bool any = false;
        for (const auto& s : segs) {
            Vec2 p = closest_on_segment(c, s);
            double d = norm(c - p);
            if (d < wk::kBaseRadius - 1e-12) {
                Vec2 n = d > 1e-9 ? (1.0 / d) * (c - p)
                                  : (dot(perp(s.b - s.a), old_c - p) >= 0
                                         ? (1.0 / norm(perp(s.b - s.a))) * perp(s.b - s.a)
                                         : (-1.0 / norm(perp(s.b - s.a))) * perp(s.b - s.a));
                c = p + wk::kBaseRadius * n;
                any = true;
                ev.collision = true;
                w.collision_latch = true;
            }
        }
        if (!any) break;
    }
    w.robot.x = old_c.x + clampd(c.x - old_c.x, -wk::kBaseVel[0] * dt, wk::kBaseVel[0] * dt);
    w.robot.y = old_c.y + clampd(c.y - old_c.y, -wk::kBaseVel[1] * dt, wk::kBaseVel[1] * dt);

    // Commanded end-effector velocities (for articulation coupling) use the
    // pre-step configuration; evaluate before integrating arms and heading.
    RobotState pre = w.robot;
    pre.x = old_c.x;
    pre.y = old_c.y;
    double dq_art[2] = {0.0, 0.0};
    std::array<double, 3> start_joints[2] = {w.robot.arm[0], w.robot.arm[1]};
    for (int a = 0; a < 2; ++a) {
        if (w.attach[a] < 0) continue;
        int id = w.attach[a];
        if (w.task == Task::Cupboard && id == 1) continue;  // carried object, no joint
        Matd J = jacobian_ee(pre, a);
        Vec2 vee{0, 0};
        for (int ccol = 0; ccol < 9; ++ccol) {
            vee.x += J.at(0, ccol) * u[ccol];
            vee.y += J.at(1, ccol) * u[ccol];
        }
        double along = dot(vee, handle_tangent(w, id));
        double radius = w.task == Task::Door    ? wk::kDoorHandleR
                        : w.task == Task::Drawer ? 1.0
                                                 : wk::kCupLeaf;
        int joint = w.task == Task::Drawer ? id : 0;
        dq_art[joint] += along * dt / radius;
    }

    w.robot.th += u[2] * dt;
    for (int a = 0; a < 2; ++a)
        for (int k = 0; k < 3; ++k)
            w.robot.arm[a][k] = clampd(w.robot.arm[a][k] + u[3 + 3 * a + k] * dt,
                                       -wk::kJointLim, wk::kJointLim);

    for (int j = 0; j < 2; ++j)
        w.q[j] = clampd(w.q[j] + dq_art[j], 0.0, articulation_max(w.task, j));

    // Rigid-grasp compliance: attached arms are re-solved onto the moved
    // handle; if unreachable within joint velocity limits the grasp slips.
    for (int a = 0; a < 2; ++a) {
        if (w.attach[a] < 0) continue;
        int id = w.attach[a];
        if (w.task == Task::Cupboard && id == 1) continue;
        std::array<double, 3> qik = w.robot.arm[a];
        bool ok = arm_ik(w.robot, a, handle_pos(w, id), qik);
        for (int k = 0; k < 3 && ok; ++k)
            if (std::abs(qik[k] - start_joints[a][k]) > wk::kJointVel * dt + 1e-12) ok = false;
        if (ok) {
            w.robot.arm[a] = qik;
        } else {
            w.attach[a] = -1;
            ev.slipped = true;
        }
    }

    if (w.task == Task::Cupboard && w.attach[1] == 1) w.object = fk_ee(w.robot, 1).p;

    // State-based attachment: a closed gripper near a free target grasps it.
    for (int a = 0; a < 2; ++a) {
        if (w.attach[a] >= 0 || w.robot.grip[a] < wk::kGripClose) continue;
        Vec2 ee = fk_ee(w.robot, a).p;
        for (int id = 0; id < target_count(w.task); ++id) {
            if (w.task == Task::Cupboard && id == 1 && a != 1) continue;
            if (w.attach[1 - a] == id) continue;
            if (norm(ee - handle_pos(w, id)) <= wk::kAttachDist) {
                w.attach[a] = id;
                w.grasped_ever[id] = true;
                ev.grasp = true;
                break;
            }
        }
    }

    ++w.tick;
    if (!success_before && check_status(w).success) ev.success = true;
    return ev;
}

Status check_status(const WorldState& w) {
    Status st;
    switch (w.task) {
        case Task::Door:
            st.partial = w.q[0] >= wk::kDoorSuccessAngle;
            st.success = st.partial && w.robot.y > 0.0 && !w.collision_latch;
            break;
        case Task::Drawer:
            st.success = w.q[0] <= wk::kDrawerCloseTol && w.q[1] >= wk::kDrawerOpenGoal;
            st.partial = w.grasped_ever[0] && w.grasped_ever[1];
            break;
        default: {
            Vec2 tgt{wk::kCupTargetX, wk::kCupTargetY};
            st.success = w.q[0] >= wk::kCupSuccessAngle && norm(w.object - tgt) <= wk::kCupPlaceTol;
            st.partial = w.grasped_ever[0];
            break;
        }
    }
    st.running = !st.success;
    return st;
}

std::vector<double> state_vector(const WorldState& w) {
    std::vector<double> s(wk::kStateDim);
    s[0] = w.robot.x;
    s[1] = w.robot.y;
    s[2] = w.robot.th;
    for (int a = 0; a < 2; ++a)
        for (int k = 0; k < 3; ++k) s[3 + 3 * a + k] = w.robot.arm[a][k];
    s[9] = w.robot.grip[0];
    s[10] = w.robot.grip[1];
    s[11] = w.q[0];
    s[12] = w.q[1];
    s[13] = w.attach[0] >= 0 ? 1.0 : 0.0;
    s[14] = w.attach[1] >= 0 ? 1.0 : 0.0;
    s[15] = w.object.x;
    s[16] = w.object.y;
    return s;
}

void action_bounds(std::vector<double>& lo, std::vector<double>& hi) {
    lo.assign(wk::kActionDim, 0.0);
    hi.assign(wk::kActionDim, 0.0);
    for (int i = 0; i < 3; ++i) {
        lo[i] = -wk::kBaseVel[i];
        hi[i] = wk::kBaseVel[i];
    }
    for (int i = 3; i < 9; ++i) {
        lo[i] = -wk::kJointVel;
        hi[i] = wk::kJointVel;
    }
    lo[9] = lo[10] = 0.0;
    hi[9] = hi[10] = 1.0;
}

std::string jsonl_line(const WorldState& w, const std::vector<double>& action,
                       const StepEvents& ev) {
    nlohmann::json j;
    j["tick"] = w.tick;
    j["task"] = task_name(w.task);
    j["state"] = state_vector(w);
    j["action"] = action;
    std::vector<std::string> names;
    if (ev.grasp) names.push_back("grasp");
    if (ev.release) names.push_back("release");
    if (ev.release_blocked) names.push_back("release_blocked");
    if (ev.slipped) names.push_back("slipped");
    if (ev.collision) names.push_back("collision");
    if (ev.success) names.push_back("success");
    j["events"] = names;
    return j.dump();
}

}  // namespace wm
