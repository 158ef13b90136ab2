"""Multi-prototype language-target continual learning at desk scale.

Frozen text-derived prototype banks (one or several per class) replace the
trainable classifier head; per-class scores pool prototype similarities with
LogSumExp; a prompt pipeline (generate, sense-filter, dedup, farthest-point
select) picks the prototypes; a class-incremental harness compares the method
against single-target and trainable-head baselines on a synthetic
polysemy world or on precomputed feature files.
"""

from .agent import (AgentSpec, PromptCandidate, PromptSet, SelectConfig,
                    build_prompt_sets, dedup, fps_select, generate_candidates,
                    load_candidate_pool, load_prompt_sets, save_candidate_pool,
                    save_prompt_sets, select_from_pool, sense_filter)
from .classifier import (PrototypeBank, TrainableHead, build_bank, ce_loss_and_grad_w,
                         ce_loss_and_grad_z, extend_bank, init_head, load_bank,
                         save_bank, score_multi, score_single)
from .continual import (AccuracyMatrix, MemoryBuffer, MethodMode, MetricsReport,
                        TaskSpec, TrainSettings, compute_metrics, make_task_sequence,
                        run_experiment, update_memory)
from .datagen import Sample, SyntheticWorld, WorldSpec, load_feature_dataset, make_world, sample_dataset
from .embedding import EmbedderSpec, Embedding, embed, load_embedding_file, write_embedding_file
from .encoder import EncoderParams, OptimState, backward, forward, init_params, sgd_step
from .errors import (AgentError, ConfigError, ContractViolation, InputError,
                     MissingEmbeddingError, ParseError)

__version__ = "0.1.0"
