from wmr.services.simbody.contact import ContactResult, contact_resolve
from wmr.services.simbody.dynamics import (
    SimState,
    mechanical_energy,
    pd_torque,
    stance_height,
    standing_state,
    step_dynamics,
)
from wmr.services.simbody.model import ContactGains, RobotModel
from wmr.services.simbody.randomization import PhysParams, randomize
