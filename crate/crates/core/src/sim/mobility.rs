//! Random-direction mobility at constant speed with specular reflection off
//! the area boundary.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{NodeState, Position};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Area {
    pub width: f64,
    pub height: f64,
}

impl Area {
    pub fn contains(&self, p: Position) -> bool {
        (0.0..=self.width).contains(&p.x) && (0.0..=self.height).contains(&p.y)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("mobility step must be positive, got {0}")]
pub struct InvalidStep(pub f64);

/// Folds an unbounded coordinate onto `[0, len]`; `true` when the motion
/// direction is reversed at the folded point.
fn fold(x: f64, len: f64) -> (f64, bool) {
    let period = 2.0 * len;
    let m = x.rem_euclid(period);
    if m <= len {
        (m, false)
    } else {
        ((period - m).max(0.0), true)
    }
}

/// Position and heading after moving `speed * dt` from `pos` along `heading`,
/// reflecting off the area walls.
pub fn advance(pos: Position, heading: f64, speed: f64, dt: f64, area: Area) -> (Position, f64) {
    if dt == 0.0 || speed == 0.0 {
        return (pos, heading);
    }
    let (mut vx, mut vy) = (heading.cos(), heading.sin());
    let (x, flip_x) = fold(pos.x + speed * vx * dt, area.width);
    let (y, flip_y) = fold(pos.y + speed * vy * dt, area.height);
    if flip_x {
        vx = -vx;
    }
    if flip_y {
        vy = -vy;
    }
    let heading = if flip_x || flip_y { vy.atan2(vx) } else { heading };
    (Position::new(x, y), heading)
}

/// Advances every node by `dt` seconds at its speed setpoint.
pub fn mobility_tick(nodes: &mut [NodeState], dt: f64, area: Area) -> Result<(), InvalidStep> {
    if !(dt > 0.0) {
        return Err(InvalidStep(dt));
    }
    for node in nodes {
        let (pos, heading) = advance(node.pos, node.heading, node.speed_setpoint, dt, area);
        node.pos = pos;
        node.heading = heading;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ChannelSet, NodeId};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    const AREA: Area = Area { width: 63.25, height: 63.25 };

    fn node(x: f64, y: f64, heading: f64) -> NodeState {
        let mut n = NodeState::new(NodeId(0), Position::new(x, y), ChannelSet::full(1));
        n.speed_setpoint = 5.0;
        n.heading = heading;
        n
    }

    #[test]
    fn straight_line_step() {
        let mut nodes = [node(10.0, 10.0, 0.0)];
        mobility_tick(&mut nodes, 1.0, AREA).unwrap();
        assert_eq!(nodes[0].pos, Position::new(15.0, 10.0));
        assert_eq!(nodes[0].heading, 0.0);
    }

    #[test]
    fn reflects_at_boundary() {
        let mut nodes = [node(62.0, 30.0, 0.0)];
        mobility_tick(&mut nodes, 1.0, AREA).unwrap();
        assert!((nodes[0].pos.x - 59.5).abs() < 1e-12);
        assert!(AREA.contains(nodes[0].pos));
        assert!((nodes[0].heading.abs() - PI).abs() < 1e-12);
    }

    #[test]
    fn zero_step_rejected() {
        let mut nodes = [node(1.0, 1.0, 0.0)];
        assert_eq!(mobility_tick(&mut nodes, 0.0, AREA), Err(InvalidStep(0.0)));
    }

    proptest! {
        #[test]
        fn stays_in_bounds(x in 0.0f64..63.25, y in 0.0f64..63.25, h in -PI..PI,
                           steps in prop::collection::vec(0.01f64..30.0, 1..20)) {
            let mut nodes = [node(x, y, h)];
            for dt in steps {
                mobility_tick(&mut nodes, dt, AREA).unwrap();
                prop_assert!(AREA.contains(nodes[0].pos), "{:?}", nodes[0].pos);
            }
        }

        #[test]
        fn one_long_step_equals_many_short(x in 0.0f64..63.25, y in 0.0f64..63.25, h in -PI..PI, n in 1usize..50) {
            let mut a = [node(x, y, h)];
            let mut b = [node(x, y, h)];
            mobility_tick(&mut a, n as f64 * 0.5, AREA).unwrap();
            for _ in 0..n { mobility_tick(&mut b, 0.5, AREA).unwrap(); }
            prop_assert!(a[0].pos.distance(b[0].pos) < 1e-6);
        }
    }
}
