"""conftuner: reinforcement-learning auto-tuner for configurable systems.

Stage I ranks performance-influential options by covering-array sampling
and K-Means clustering; stage II runs tabular Q-learning over canonical
configuration states with adaptive power-of-two value generation, a
measurement cache, and equal-measurement state merging.
"""

__version__ = "0.1.0"

from .constraints import (  # noqa: E402
    OFF,
    ON,
    ConstraintExpr,
    check,
    find_assignment,
    parse_constraint,
    repair,
)
from .envs import (  # noqa: E402
    Condition,
    Effect,
    Environment,
    ExternalEnv,
    ExternalEnvSpec,
    FunctionEnv,
    Interaction,
    SequenceEnv,
    SyntheticEnv,
    SyntheticEnvSpec,
    load_environment,
    random_synth_spec,
    synth_best,
    synth_evaluate,
    synth_optimum,
)
from .errors import (  # noqa: E402
    ConftunerError,
    ConstraintError,
    EnvironmentFailure,
    EvaluationError,
    RepairInfeasibleError,
    SchemaError,
    UsageError,
)
from .lattice import (  # noqa: E402
    DECREASE,
    DOUBLE_THEN_CEIL,
    INCREASE,
    NEXT_POW2,
    ValueLattice,
    action_count,
    apply_action,
    apply_random_value,
    decode_action,
    encode_action,
    lattice,
    lattices_for,
    step_value,
)
from .qlearn import (  # noqa: E402
    LearnerParams,
    QTable,
    decay_epsilon,
    load_qtable,
    q_update,
    rebuild_qtable,
    replay_forced,
    reward,
    run,
    save_qtable,
    select_action,
)
from .ranking import (  # noqa: E402
    PerfDataset,
    RankedOptions,
    cluster,
    map_score,
    normalize,
    rank_options,
    reweighted_schema,
)
from .report import EpisodeRecord, MergeEvent, RunReport, Transition  # noqa: E402
from .sampling import SamplePlan, build_covering_array, plan_to_csv, sampling_levels  # noqa: E402
from .schema import (  # noqa: E402
    BINARY,
    NUMERICAL,
    Configuration,
    OptionSpec,
    Schema,
    default_configuration,
    parse_schema,
    render_schema,
    state_id,
)
from .states import MergeSummary, StateRegistry  # noqa: E402
from .strategies import (  # noqa: E402
    STRATEGIES,
    compare,
    random_configuration,
    resolve_initial_state,
    run_strategy,
)
