from .gradcheck import grad_check, relative_error
from .model import (AgentState, AttentionResult, LossBreakdown, ShapeError,
                    STOP_INDEX, action_logits, backward_rollout,
                    balanced_shift_sample, encode_instruction,
                    encoder_backward, forward_shift, forward_step, joint_loss,
                    policy_step, shift_probability, text_attend,
                    visual_attend)
from .params import (DIRECTION_DIMS, ModelParams, NeuralConfig, Vocabulary,
                     init_params, load_checkpoint, save_checkpoint,
                     zero_params)

__all__ = [
    "AgentState", "AttentionResult", "DIRECTION_DIMS", "LossBreakdown",
    "ModelParams", "NeuralConfig", "STOP_INDEX", "ShapeError", "Vocabulary",
    "action_logits", "backward_rollout", "balanced_shift_sample",
    "encode_instruction", "encoder_backward", "forward_shift", "forward_step",
    "grad_check", "init_params", "joint_loss", "load_checkpoint",
    "policy_step", "relative_error", "save_checkpoint", "shift_probability",
    "text_attend", "visual_attend", "zero_params",
]
