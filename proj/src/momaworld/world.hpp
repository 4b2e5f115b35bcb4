#pragma once

// Planar kinematic world: holonomic base + two 3-link arms + grippers
// interacting with one articulated fixture per task (door, drawer pair,
// cupboard). First-order kinematics only; no dynamics.

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "core/mat.hpp"

namespace wm {

enum class Task { Door = 0, Drawer = 1, Cupboard = 2 };

const char* task_name(Task t);
Task task_from_name(const std::string& name);

struct TaskSpec {
    Task kind = Task::Door;
    int horizon = 600;
    double dt = 0.025;
    static TaskSpec make(Task t);
};

// Geometry and limit constants shared by the world, the WBC layer and tests.
namespace wk {
inline constexpr double kDt = 0.025;
inline constexpr double kLink[3] = {0.35, 0.30, 0.20};
inline constexpr double kReach = kLink[0] + kLink[1] + kLink[2];
inline constexpr double kMountY[2] = {0.20, -0.20};  // arm 0 = left, 1 = right
inline constexpr double kJointLim = 2.6;
inline constexpr double kJointVel = 1.5;
inline constexpr double kBaseVel[3] = {0.5, 0.5, 1.0};
inline constexpr double kBaseRadius = 0.30;
inline constexpr double kAttachDist = 0.05;
inline constexpr double kGripClose = 0.5;
inline constexpr double kRigidTol = 1e-6;

inline constexpr double kDoorLeaf = 0.8;
inline constexpr double kDoorHandleR = 0.4;
inline constexpr double kDoorMax = 1.5707963267948966;
inline constexpr double kDoorSuccessAngle = 1.2;

inline constexpr double kDrawerHandleX[2] = {-0.45, 0.45};
inline constexpr double kDrawerFaceY = -0.08;
inline constexpr double kDrawerMax = 0.30;
inline constexpr double kDrawerCloseTol = 0.02;
inline constexpr double kDrawerOpenGoal = 0.28;

inline constexpr double kCupHingeX = -0.35;
inline constexpr double kCupLeaf = 0.6;
inline constexpr double kCupMax = 1.5707963267948966;
inline constexpr double kCupSuccessAngle = 1.3;
inline constexpr double kCupReleaseAngle = 1.0;
inline constexpr double kCupTargetX = 0.0;
inline constexpr double kCupTargetY = 0.12;
inline constexpr double kCupPlaceTol = 0.05;

inline constexpr int kStateDim = 17;
inline constexpr int kActionDim = 11;
}  // namespace wk

struct Vec2 {
    double x = 0, y = 0;
};
inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double norm(Vec2 a) { return std::sqrt(a.x * a.x + a.y * a.y); }

struct Segment {
    Vec2 a, b;
};

struct RobotState {
    double x = 0, y = 0, th = 0;
    std::array<double, 3> arm[2] = {{0, 0, 0}, {0, 0, 0}};
    double grip[2] = {0, 0};
};

struct StepEvents {
    bool grasp = false;
    bool release = false;
    bool release_blocked = false;
    bool slipped = false;
    bool collision = false;
    bool success = false;
};

// attach target ids: Door {0=handle}; Drawer {0=handle A, 1=handle B};
// Cupboard {0=handle, 1=carried object (right arm only)}.
struct WorldState {
    Task task = Task::Door;
    RobotState robot;
    double q[2] = {0, 0};
    int attach[2] = {-1, -1};
    bool grasped_ever[2] = {false, false};
    Vec2 object{0, 0};
    bool collision_latch = false;
    int tick = 0;
    uint64_t seed = 0;
};

struct Status {
    bool running = true;
    bool success = false;
    bool partial = false;
};

// Forward kinematics of one end effector: world position and world heading.
struct EePose {
    Vec2 p;
    double heading;
};
EePose fk_ee(const RobotState& r, int arm);

// Damped-least-squares arm IK toward a world target from the current joints;
// also used by controllers to test whether a grasp snap fits velocity limits.
bool arm_ik(const RobotState& base_pose, int arm, Vec2 target, std::array<double, 3>& q);
Vec2 mount_pos(const RobotState& r, int arm);

// 2x9 position Jacobian, columns [vx, vy, omega, qL1..3, qR1..3].
Matd jacobian_ee(const RobotState& r, int arm);

// Handle frame of target `id` at articulation value q; unit tangent is the
// direction of increasing q.
Vec2 handle_pos(const WorldState& w, int id);
Vec2 handle_tangent(const WorldState& w, int id);
double articulation_max(Task t, int id);
int target_count(Task t);

// Static walls plus the moving leaf (if any) at the current articulation.
std::vector<Segment> collision_segments(const WorldState& w);

WorldState reset(const TaskSpec& spec, uint64_t seed, double joint_noise_sigma);
StepEvents step(WorldState& w, const std::vector<double>& action);
Status check_status(const WorldState& w);

// Canonical policy-facing encodings.
std::vector<double> state_vector(const WorldState& w);
void action_bounds(std::vector<double>& lo, std::vector<double>& hi);

// Debug trace: one JSON object per line.
std::string jsonl_line(const WorldState& w, const std::vector<double>& action,
                       const StepEvents& ev);

}  // namespace wm
