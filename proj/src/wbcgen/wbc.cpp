#include "wbcgen/wbc.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace wm {

using hqp::HqpProblem;
using hqp::HqpResult;
using hqp::LinearTask;
using hqp::solve_hierarchy;
using hqp::TaskKind;
using hqp::velocity_damper;

namespace {

constexpr double kPi = 3.14159265358979323846;

// Servo gains (1/s) turning position errors into velocity targets.
constexpr double kGainEe = 3.0;
constexpr double kGainBase = 2.0;
constexpr double kGainPosture = 0.25;

// Fraction of the world velocity limits the solver may use; the headroom
// lets the rigid-grasp compliance track a moving handle without slipping.
constexpr double kBoxScale = 0.9;

// Grippers close only when the end effector is nearly touching, so the
// grasp starts rigid without a large first-tick correction.
constexpr double kGripCloseDist = 0.012;
constexpr double kSnapBudget = 0.8;
constexpr double kBaseRelaxDist = 0.15;
constexpr Vec2 kCupStanceOff{0.20, -0.50};

// Carrot path speed per unit of sampled waypoint spacing: bold parameter draws
// articulate fast, cautious ones slowly, spreading timing and motion style.
constexpr double kCarrotSpeedGain = 1.2;
// The carrot never leads the true handle by more than this arc length; a
// bigger gap would let the servo yank the handle and slip the grasp.
constexpr double kSlipGuard = 0.12;

// EE-EE separation damper: keep end effectors at least this far apart.
constexpr double kEeMinDist = 0.05;
constexpr double kEeDamperMargin = 0.1;
constexpr double kEeRelVmax = 1.0;

// Task waypoints and goals.
constexpr double kDoorArtGoal = 1.50;
constexpr double kDoorBaseArcR = 0.45;
constexpr double kDoorBaseArcScale = 0.5;   // base arc angle = scale*q - offset
constexpr double kDoorBaseArcOffset = 0.9;
const Vec2 kDoorPassGoal{0.47, 0.60};

constexpr double kDrawerAGoal = 0.0;
constexpr double kDrawerBGoal = 0.30;
const Vec2 kDrawerApproach{0.0, -0.12};
const Vec2 kDrawerPregraspABase{-0.25, -0.95};
const Vec2 kDrawerPregraspBBase{0.0, -0.85};
const Vec2 kDrawerGraspBase{0.0, -0.78};
const Vec2 kDrawerStandoff{0.0, -0.55};

constexpr double kCupArtGoal = 1.50;
const Vec2 kCupApproach{0.0, -0.14};
const Vec2 kCupBase{0.44, -0.59};
const Vec2 kCupPlaceBase{0.10, -0.50};
const Vec2 kCupTransitBase{0.35, -0.85};
constexpr double kCupReleaseDist = 0.04;

const std::array<double, 3> kNominalArm[2] = {{0.3, -0.6, 0.3}, {-0.3, 0.6, -0.3}};

double wrap_angle(double a) {
    while (a > kPi) a -= 2 * kPi;
    while (a < -kPi) a += 2 * kPi;
    return a;
}

Vec2 door_handle_at(double q) {
    return wk::kDoorHandleR * Vec2{std::cos(q), std::sin(q)};
}

Vec2 door_base_arc(double q) {
    double a = kDoorBaseArcScale * q - kDoorBaseArcOffset;
    return kDoorBaseArcR * Vec2{std::cos(a), std::sin(a)};
}

Vec2 drawer_handle_at(int id, double q) {
    return {wk::kDrawerHandleX[id], wk::kDrawerFaceY - q};
}

Vec2 cup_handle_at(double q) {
    return Vec2{wk::kCupHingeX, 0.0} + wk::kCupLeaf * Vec2{std::cos(q), -std::sin(q)};
}

Vec2 tucked_ee(const RobotState& r, int arm) {
    RobotState tmp = r;
    tmp.arm[arm] = kNominalArm[arm];
    return fk_ee(tmp, arm).p;
}

// Articulation values the current waypoint aims at.
void drawer_waypoint_q(const StageMachine& m, double& qa, double& qb) {
    double f = m.n_waypoints > 0 ? double(m.waypoint + 1) / m.n_waypoints : 1.0;
    qa = m.art_start + f * (kDrawerAGoal - m.art_start);
    qb = m.art_start2 + f * (kDrawerBGoal - m.art_start2);
}

double ladder_waypoint_q(const StageMachine& m, double goal) {
    double f = m.n_waypoints > 0 ? double(m.waypoint + 1) / m.n_waypoints : 1.0;
    return m.art_start + f * (goal - m.art_start);
}

// Path distance the articulation carrot has glided since the ladder was built.
double carrot_clock_q(const StageMachine& m, const WbcParams& p) {
    return kCarrotSpeedGain * p.articulation_step * m.art_ticks * wk::kDt;
}

int ladder_size(double path_len, double step) {
    return std::max(1, (int)std::ceil(std::abs(path_len) / step));
}

}  // namespace

WbcParams sample_params(Rng& rng) {
    WbcParams p;
    p.pregrasp_threshold = rng.uniform(0.01, 0.25);
    p.grasp_threshold = rng.uniform(0.01, 0.10);
    p.articulation_step = rng.uniform(0.005, 0.25);
    p.ee_weight = rng.uniform(0.1, 5.0);
    p.base_weight = rng.uniform(0.1, 5.0);
    p.posture_weight = rng.uniform(0.0, 1.0);
    p.joint_noise_sigma = 0.1;
    return p;
}

void validate_params(const WbcParams& p) {
    auto in = [](double v, double lo, double hi) { return v >= lo && v <= hi; };
    if (!in(p.pregrasp_threshold, 0.01, 0.25))
        throw std::out_of_range("pregrasp_threshold outside [0.01, 0.25]");
    if (!in(p.grasp_threshold, 0.01, 0.10))
        throw std::out_of_range("grasp_threshold outside [0.01, 0.1]");
    if (!in(p.articulation_step, 0.005, 0.25))
        throw std::out_of_range("articulation_step outside [0.005, 0.25]");
    if (!in(p.ee_weight, 0.1, 5.0)) throw std::out_of_range("ee_weight outside [0.1, 5.0]");
    if (!in(p.base_weight, 0.1, 5.0)) throw std::out_of_range("base_weight outside [0.1, 5.0]");
    if (!in(p.posture_weight, 0.0, 1.0))
        throw std::out_of_range("posture_weight outside [0.0, 1.0]");
    if (p.joint_noise_sigma < 0) throw std::out_of_range("joint_noise_sigma must be >= 0");
}

StageMachine make_machine(Task t) {
    StageMachine m;
    m.task = t;
    return m;
}

const char* stage_name(Task t, int stage) {
    static const char* door[] = {"REACH", "ARTICULATE", "PASS_THROUGH"};
    static const char* drawer[] = {"PREGRASP_A", "PREGRASP_B", "GRASP", "ARTICULATE"};
    static const char* cup[] = {"PREGRASP", "GRASP", "ARTICULATE", "PLACE"};
    switch (t) {
        case Task::Door: return door[std::min(stage, 2)];
        case Task::Drawer: return drawer[std::min(stage, 3)];
        default: return cup[std::min(stage, 3)];
    }
}

namespace {

// Close once touching (or already holding); stay open otherwise. Touching is
// not enough on its own: the rigid-grasp solve snaps the end effector onto the
// handle next tick, so the snap must also fit the per-joint velocity budget or
// the grasp would immediately slip.
double grip_near(const WorldState& w, int arm, Vec2 handle) {
    double dist = norm(fk_ee(w.robot, arm).p - handle);
    if (w.attach[arm] >= 0 && dist < 1e-6) return 1.0;
    if (w.attach[arm] < 0 && dist >= kGripCloseDist) return 0.0;
    // Holding off-handle (a slip re-attached at an offset) or touching: keep
    // the gripper closed only if the snap fits the velocity budget, otherwise
    // release and let the approach re-converge.
    std::array<double, 3> qik = w.robot.arm[arm];
    if (!arm_ik(w.robot, arm, handle, qik)) return 0.0;
    for (int k = 0; k < 3; ++k)
        if (std::abs(qik[k] - w.robot.arm[arm][k]) > kSnapBudget * wk::kJointVel * wk::kDt)
            return 0.0;
    return 1.0;
}

}  // namespace

WbcTargets stage_targets(const StageMachine& m, const WorldState& w, const WbcParams& p) {
    WbcTargets t;
    t.base_th = kPi / 2;
    t.ee[0] = tucked_ee(w.robot, 0);
    t.ee[1] = tucked_ee(w.robot, 1);
    switch (m.task) {
        case Task::Door:
            switch (m.stage) {
                case 0:
                    t.ee[1] = door_handle_at(w.q[0]);
                    t.ee_world[1] = true;
                    t.base_xy = door_base_arc(w.q[0]);
                    t.grip[1] = grip_near(w, 1, t.ee[1]);
                    break;
                case 1: {
                    double wq = ladder_waypoint_q(m, kDoorArtGoal);
                    wq = std::min(wq, carrot_clock_q(m, p) / wk::kDoorHandleR + m.art_start);
                    wq = w.attach[1] >= 0 ? std::min(wq, w.q[0] + kSlipGuard / wk::kDoorHandleR)
                                          : w.q[0];
                    t.ee[1] = door_handle_at(wq);
                    t.ee_world[1] = true;
                    t.base_xy = door_base_arc(wq);
                    t.grip[1] = grip_near(w, 1, door_handle_at(w.q[0]));
                    break;
                }
                default:
                    t.base_xy = kDoorPassGoal;
                    break;
            }
            break;
        case Task::Drawer:
            switch (m.stage) {
                case 0:
                    t.ee[0] = drawer_handle_at(0, w.q[0]) + kDrawerApproach;
                    t.ee_world[0] = true;
                    t.base_xy = kDrawerPregraspABase;
                    break;
                case 1:
                    t.ee[0] = drawer_handle_at(0, w.q[0]) + kDrawerApproach;
                    t.ee[1] = drawer_handle_at(1, w.q[1]) + kDrawerApproach;
                    t.ee_world[0] = t.ee_world[1] = true;
                    t.base_xy = kDrawerPregraspBBase;
                    break;
                case 2:
                    t.ee[0] = drawer_handle_at(0, w.q[0]);
                    t.ee[1] = drawer_handle_at(1, w.q[1]);
                    t.ee_world[0] = t.ee_world[1] = true;
                    t.base_xy = kDrawerGraspBase;
                    t.grip[0] = grip_near(w, 0, t.ee[0]);
                    t.grip[1] = grip_near(w, 1, t.ee[1]);
                    break;
                default: {
                    double qa, qb;
                    drawer_waypoint_q(m, qa, qb);
                    double clock = carrot_clock_q(m, p);
                    qa = std::max(qa, m.art_start - clock);
                    qb = std::min(qb, m.art_start2 + clock);
                    qa = w.attach[0] >= 0 ? std::max(qa, w.q[0] - kSlipGuard) : w.q[0];
                    qb = w.attach[1] >= 0 ? std::min(qb, w.q[1] + kSlipGuard) : w.q[1];
                    t.ee[0] = drawer_handle_at(0, qa);
                    t.ee[1] = drawer_handle_at(1, qb);
                    t.ee_world[0] = t.ee_world[1] = true;
                    Vec2 mid = 0.5 * (t.ee[0] + t.ee[1]);
                    t.base_xy = Vec2{mid.x, mid.y} + kDrawerStandoff;
                    t.base_station = w.attach[0] >= 0 || w.attach[1] >= 0;
                    t.grip[0] = grip_near(w, 0, drawer_handle_at(0, w.q[0]));
                    t.grip[1] = grip_near(w, 1, drawer_handle_at(1, w.q[1]));
                    break;
                }
            }
            break;
        default:
            t.grip[1] = 1.0;  // carrying the object
            switch (m.stage) {
                case 0:
                    t.ee[0] = cup_handle_at(w.q[0]) + kCupApproach;
                    t.ee_world[0] = true;
                    t.base_xy = kCupBase;
                    break;
                case 1:
                    t.ee[0] = cup_handle_at(w.q[0]);
                    t.ee_world[0] = true;
                    t.base_xy = kCupBase;
                    t.grip[0] = grip_near(w, 0, t.ee[0]);
                    break;
                case 2: {
                    double wq = ladder_waypoint_q(m, kCupArtGoal);
                    wq = std::min(wq, carrot_clock_q(m, p) / wk::kCupLeaf + m.art_start);
                    wq = w.attach[0] >= 0 ? std::min(wq, w.q[0] + kSlipGuard / wk::kCupLeaf)
                                          : w.q[0];
                    t.ee[0] = cup_handle_at(wq);
                    t.ee_world[0] = true;
                    // Stance glides with the handle at a fixed offset: the leaf
                    // sweep stays clear of the base disc and the mount-to-handle
                    // distance stays comfortably inside reach.
                    t.base_xy = cup_handle_at(wq) + kCupStanceOff;
                    t.grip[0] = grip_near(w, 0, cup_handle_at(w.q[0]));
                    break;
                }
                default: {
                    // Handle released and the arm tucked: staying attached would
                    // drag the leaf shut as the base drives to the place stance.
                    // Transit swings east first to clear the open leaf.
                    t.ee[1] = {wk::kCupTargetX, wk::kCupTargetY};
                    t.ee_world[1] = true;
                    t.base_xy = w.robot.x < 0.05 ? kCupTransitBase : kCupPlaceBase;
                    t.grip[0] = 0.0;
                    double d = norm(fk_ee(w.robot, 1).p -
                                    Vec2{wk::kCupTargetX, wk::kCupTargetY});
                    t.grip[1] = d < kCupReleaseDist ? 0.0 : 1.0;
                    break;
                }
            }
            break;
    }
    return t;
}

void advance_stage(StageMachine& m, const WorldState& w, const WbcParams& p) {
    bool articulating = (m.task == Task::Door && m.stage == 1) ||
                        (m.task == Task::Drawer && m.stage == 3) ||
                        (m.task == Task::Cupboard && m.stage == 2);
    if (articulating) ++m.art_ticks;
    for (int guard = 0; guard < 5; ++guard) {
        Vec2 eeL = fk_ee(w.robot, 0).p;
        Vec2 eeR = fk_ee(w.robot, 1).p;
        bool moved = false;
        switch (m.task) {
            case Task::Door:
                if (m.stage == 0 && norm(eeR - door_handle_at(w.q[0])) < p.grasp_threshold) {
                    m.stage = 1;
                    m.art_start = w.q[0];
                    m.art_ticks = 0;
                    m.n_waypoints = ladder_size((kDoorArtGoal - w.q[0]) * wk::kDoorHandleR,
                                                p.articulation_step);
                    m.waypoint = 0;
                    moved = true;
                } else if (m.stage == 1) {
                    double wq = ladder_waypoint_q(m, kDoorArtGoal);
                    if (norm(eeR - door_handle_at(wq)) < p.grasp_threshold) {
                        if (m.waypoint + 1 < m.n_waypoints) {
                            ++m.waypoint;
                        } else {
                            m.stage = 2;
                        }
                        moved = true;
                    }
                }
                break;
            case Task::Drawer:
                if (m.stage == 0 &&
                    norm(eeL - (drawer_handle_at(0, w.q[0]) + kDrawerApproach)) <
                        p.pregrasp_threshold) {
                    m.stage = 1;
                    moved = true;
                } else if (m.stage == 1 &&
                           norm(eeR - (drawer_handle_at(1, w.q[1]) + kDrawerApproach)) <
                               p.pregrasp_threshold) {
                    m.stage = 2;
                    moved = true;
                } else if (m.stage == 2 &&
                           std::max(norm(eeL - drawer_handle_at(0, w.q[0])),
                                    norm(eeR - drawer_handle_at(1, w.q[1]))) <
                               p.grasp_threshold) {
                    m.stage = 3;
                    m.art_start = w.q[0];
                    m.art_start2 = w.q[1];
                    m.art_ticks = 0;
                    double len = std::max(std::abs(kDrawerAGoal - w.q[0]),
                                          std::abs(kDrawerBGoal - w.q[1]));
                    m.n_waypoints = ladder_size(len, p.articulation_step);
                    m.waypoint = 0;
                    moved = true;
                } else if (m.stage == 3 && m.waypoint + 1 < m.n_waypoints) {
                    double qa, qb;
                    drawer_waypoint_q(m, qa, qb);
                    if (std::max(norm(eeL - drawer_handle_at(0, qa)),
                                 norm(eeR - drawer_handle_at(1, qb))) < p.grasp_threshold) {
                        ++m.waypoint;
                        moved = true;
                    }
                }
                break;
            default:
                if (m.stage == 0 &&
                    norm(eeL - (cup_handle_at(w.q[0]) + kCupApproach)) < p.pregrasp_threshold) {
                    m.stage = 1;
                    moved = true;
                } else if (m.stage == 1 &&
                           norm(eeL - cup_handle_at(w.q[0])) < p.grasp_threshold) {
                    m.stage = 2;
                    m.art_start = w.q[0];
                    m.art_ticks = 0;
                    m.n_waypoints = ladder_size((kCupArtGoal - w.q[0]) * wk::kCupLeaf,
                                                p.articulation_step);
                    m.waypoint = 0;
                    moved = true;
                } else if (m.stage == 2) {
                    double wq = ladder_waypoint_q(m, kCupArtGoal);
                    if (norm(eeL - cup_handle_at(wq)) < p.grasp_threshold) {
                        if (m.waypoint + 1 < m.n_waypoints) {
                            ++m.waypoint;
                        } else {
                            m.stage = 3;
                        }
                        moved = true;
                    }
                }
                break;
        }
        if (!moved) break;
    }
}

std::vector<double> wbc_action(const WorldState& w, const StageMachine& m,
                               const WbcParams& p, bool posture_as_third_level) {
    WbcTargets tg = stage_targets(m, w, p);
    const int n = 9;

    const double box = kBoxScale;

    HqpProblem prob;
    prob.lo.assign(n, 0.0);
    prob.hi.assign(n, 0.0);
    for (int i = 0; i < 3; ++i) {
        prob.lo[i] = -box * wk::kBaseVel[i];
        prob.hi[i] = box * wk::kBaseVel[i];
    }
    for (int a = 0; a < 2; ++a)
        for (int k = 0; k < 3; ++k) {
            auto b = velocity_damper(w.robot.arm[a][k], -wk::kJointLim, wk::kJointLim,
                                     box * wk::kJointVel);
            prob.lo[3 + 3 * a + k] = b.first;
            prob.hi[3 + 3 * a + k] = b.second;
        }

    Matd JL = jacobian_ee(w.robot, 0);
    Matd JR = jacobian_ee(w.robot, 1);
    Vec2 pL = fk_ee(w.robot, 0).p;
    Vec2 pR = fk_ee(w.robot, 1).p;

    // Level 0: end-effector separation damper.
    std::vector<LinearTask> level0;
    double d = norm(pL - pR);
    if (d > 1e-9) {
        Vec2 nh = (1.0 / d) * (pL - pR);
        LinearTask sep;
        sep.kind = TaskKind::Inequality;
        sep.A = Matd(1, n);
        for (int c = 0; c < n; ++c)
            sep.A.at(0, c) = -(nh.x * (JL.at(0, c) - JR.at(0, c)) +
                               nh.y * (JL.at(1, c) - JR.at(1, c)));
        double bound = std::clamp((d - kEeMinDist) / kEeDamperMargin, -1.0, 1.0) * kEeRelVmax;
        sep.b = {bound};
        level0.push_back(std::move(sep));
    }

    // Level 0: grasp maintenance. An arm holding an articulated handle may only
    // move its end effector along the handle path; off-path velocity would have
    // to be absorbed by the rigid-grasp solve and makes the grasp slip.
    for (int a = 0; a < 2; ++a) {
        if (w.attach[a] < 0) continue;
        if (w.task == Task::Cupboard && w.attach[a] == 1) continue;
        Vec2 tan = handle_tangent(w, w.attach[a]);
        Vec2 nrm{-tan.y, tan.x};
        const Matd& J = a == 0 ? JL : JR;
        LinearTask hold;
        hold.kind = TaskKind::Equality;
        hold.A = Matd(1, n);
        for (int c = 0; c < n; ++c)
            hold.A.at(0, c) = nrm.x * J.at(0, c) + nrm.y * J.at(1, c);
        hold.b = {0.0};
        level0.push_back(std::move(hold));
    }

    // Final approach: an unattached arm close to its world-frame target gets a
    // bias-free solve (base station keeping, posture damping) so the tracking
    // task can finish the reach exactly instead of parking at a weighted
    // equilibrium short of the handle.
    bool approach[2] = {false, false};
    bool relax[2] = {false, false};
    for (int a = 0; a < 2; ++a) {
        approach[a] = tg.ee_world[a] && w.attach[a] < 0 &&
                      norm(tg.ee[a] - (a == 0 ? pL : pR)) < kBaseRelaxDist;
        relax[a] = approach[a] || (tg.ee_world[a] && w.attach[a] >= 0);
    }

    std::vector<LinearTask> tracking;
    for (int a = 0; a < 2; ++a) {
        LinearTask ee;
        ee.kind = TaskKind::Equality;
        ee.weight = p.ee_weight;
        ee.A = a == 0 ? JL : JR;
        if (!tg.ee_world[a])
            for (int c = 0; c < 3; ++c) ee.A.at(0, c) = ee.A.at(1, c) = 0.0;
        Vec2 err = tg.ee[a] - (a == 0 ? pL : pR);
        ee.b = {kGainEe * err.x, kGainEe * err.y};
        tracking.push_back(std::move(ee));
    }
    {
        LinearTask base;
        base.kind = TaskKind::Equality;
        base.weight = p.base_weight;
        base.A = Matd(3, n);
        base.A.fill(0.0);
        for (int i = 0; i < 3; ++i) base.A.at(i, i) = 1.0;
        if (approach[0] || approach[1] || tg.base_station)
            base.b = {0.0, 0.0, 0.0};
        else
            base.b = {kGainBase * (tg.base_xy.x - w.robot.x),
                      kGainBase * (tg.base_xy.y - w.robot.y),
                      kGainBase * wrap_angle(tg.base_th - w.robot.th)};
        tracking.push_back(std::move(base));
    }
    LinearTask posture;
    posture.kind = TaskKind::Equality;
    posture.weight = p.posture_weight;
    posture.A = Matd(6, n);
    posture.A.fill(0.0);
    posture.b.assign(6, 0.0);
    for (int a = 0; a < 2; ++a)
        for (int k = 0; k < 3; ++k) {
            posture.A.at(3 * a + k, 3 + 3 * a + k) = 1.0;
            posture.b[3 * a + k] =
                relax[a] ? 0.0 : kGainPosture * (kNominalArm[a][k] - w.robot.arm[a][k]);
        }

    prob.levels.push_back(std::move(level0));
    if (posture_as_third_level) {
        prob.levels.push_back(std::move(tracking));
        prob.levels.push_back({std::move(posture)});
    } else {
        tracking.push_back(std::move(posture));
        prob.levels.push_back(std::move(tracking));
    }

    HqpResult res = solve_hierarchy(prob);

    std::vector<double> action(wk::kActionDim, 0.0);
    for (int i = 0; i < n; ++i) action[i] = res.x[i];
    action[9] = tg.grip[0];
    action[10] = tg.grip[1];
    return action;
}

ProgressDistances progress_distances(Task t, const std::vector<double>& s) {
    RobotState r;
    r.x = s[0];
    r.y = s[1];
    r.th = s[2];
    for (int a = 0; a < 2; ++a)
        for (int k = 0; k < 3; ++k) r.arm[a][k] = s[3 + 3 * a + k];
    double q0 = s[11], q1 = s[12];
    ProgressDistances d;
    switch (t) {
        case Task::Door:
            d.articulation = std::max(wk::kDoorSuccessAngle - q0, 0.0);
            d.ee = norm(fk_ee(r, 1).p - door_handle_at(q0));
            d.base = norm(Vec2{r.x, r.y} - kDoorPassGoal);
            break;
        case Task::Drawer:
            d.articulation = std::max(q0 - wk::kDrawerCloseTol, 0.0) +
                             std::max(wk::kDrawerOpenGoal - q1, 0.0);
            d.ee = 0.5 * (norm(fk_ee(r, 0).p - drawer_handle_at(0, q0)) +
                          norm(fk_ee(r, 1).p - drawer_handle_at(1, q1)));
            break;
        default:
            d.articulation = std::max(wk::kCupSuccessAngle - q0, 0.0);
            d.ee = norm(fk_ee(r, 0).p - cup_handle_at(q0));
            break;
    }
    return d;
}

void label_rewards(Episode& ep) {
    const size_t T = ep.actions.size();
    if (ep.states.size() != T + 1) throw std::invalid_argument("label_rewards: incomplete episode");
    ep.rewards.assign(T, 0.0);
    if (T == 0) return;
    ProgressDistances d0 = progress_distances(ep.task, ep.states[0]);
    ProgressDistances prev = d0;
    const bool use_base = ep.task == Task::Door;
    for (size_t t = 0; t < T; ++t) {
        ProgressDistances cur = progress_distances(ep.task, ep.states[t + 1]);
        double r = 0;
        if (d0.articulation > 1e-9) r += (prev.articulation - cur.articulation) / d0.articulation;
        if (d0.ee > 1e-9) r += (prev.ee - cur.ee) / d0.ee;
        if (use_base && d0.base > 1e-9) r += (prev.base - cur.base) / d0.base;
        ep.rewards[t] = r;
        prev = cur;
    }
    if (ep.success_tick >= 0 && ep.success_tick < (int)T) ep.rewards[ep.success_tick] += 1.0;
}

Episode rollout_wbc(Task task, uint64_t seed, const WbcParams& p, bool posture_as_third_level) {
    validate_params(p);
    TaskSpec spec = TaskSpec::make(task);
    WorldState w = reset(spec, seed, p.joint_noise_sigma);
    StageMachine m = make_machine(task);

    Episode ep;
    ep.task = task;
    ep.seed = seed;
    ep.params = p;
    ep.states.push_back(state_vector(w));
    for (int t = 0; t < spec.horizon; ++t) {
        advance_stage(m, w, p);
        std::vector<double> a = wbc_action(w, m, p, posture_as_third_level);
        StepEvents ev = step(w, a);
        ep.actions.push_back(std::move(a));
        ep.stages.push_back(m.stage);
        uint8_t bits = 0;
        if (ev.grasp) bits |= ev_bit::kGrasp;
        if (ev.release) bits |= ev_bit::kRelease;
        if (ev.release_blocked) bits |= ev_bit::kReleaseBlocked;
        if (ev.slipped) bits |= ev_bit::kSlipped;
        if (ev.collision) bits |= ev_bit::kCollision;
        if (ev.success) bits |= ev_bit::kSuccess;
        ep.events.push_back(bits);
        ep.states.push_back(state_vector(w));
        if (ev.success) ep.success_tick = t;
        if (!check_status(w).running) break;
    }
    Status st = check_status(w);
    ep.success = st.success;
    ep.partial = st.partial;
    label_rewards(ep);
    return ep;
}

}  // namespace wm
