use crate::dsl::ScenarioSpec;

const LINEAR_EXAMPLE: &str = "\
# triple-integrator-like linear plant tracking a unit rotation
[dims]
n = 3
k = 2
[plant]
f1 = x2
f2 = x3 + u
f3 = 0.5*u
h = x1 - w1
[exo]
a1 = -w2
a2 = w1
[init]
x0 = 0, 0, 0
w0 = 1, 0
[mpr]
horizon = 4
degree = 2
steps = 96
";

const PENDULUM: &str = "\
# asymmetrically damped pendulum, Lie-series discretized
[dims]
n = 2
k = 2
[plant]
continuous = true
ts = pi/6
G = 0, 1
f1 = x2
f2 = -sin(x1) - (x2 + x2^2 + x2^3) + u
h = x1 - w1
[exo]
a1 = cos(pi/4)*w1 - sin(pi/4)*w2
a2 = sin(pi/4)*w1 + cos(pi/4)*w2
[init]
x0 = 0, 0
w0 = 1, 0
[mpr]
horizon = 4
degree = 4
steps = 96
# the shooting problem from large offsets needs a few hundred iterations
max_iter = 1000
";

pub fn scenario_linear_example() -> ScenarioSpec {
    ScenarioSpec::parse("linear", LINEAR_EXAMPLE).expect("built-in scenario parses")
}

pub fn scenario_pendulum() -> ScenarioSpec {
    ScenarioSpec::parse("pendulum", PENDULUM).expect("built-in scenario parses")
}

/// Built-in scenario by name.
pub fn builtin(name: &str) -> Option<ScenarioSpec> {
    match name {
        "linear" => Some(scenario_linear_example()),
        "pendulum" => Some(scenario_pendulum()),
        _ => None,
    }
}

/// Source text of a built-in scenario.
pub fn builtin_text(name: &str) -> Option<&'static str> {
    match name {
        "linear" => Some(LINEAR_EXAMPLE),
        "pendulum" => Some(PENDULUM),
        _ => None,
    }
}
