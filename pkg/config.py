"""
系统配置
"""

import os
from pathlib import Path

# 基础配置
BASE_DIR = Path(__file__).parent
LOGS_DIR = BASE_DIR / "logs"

# 创建必要目录
LOGS_DIR.mkdir(exist_ok=True)


def _get_bool_env(key: str, default: bool = False) -> bool:
    """获取布尔类型的环境变量"""
    value = os.getenv(key, str(default)).lower()
    return value in ("true", "1", "yes", "on")


def _get_int_env(key: str, default: int) -> int:
    """获取整数类型的环境变量"""
    try:
        return int(os.getenv(key, default))
    except (TypeError, ValueError):
        return default


def _get_float_env(key: str, default: float) -> float:
    """获取浮点类型的环境变量"""
    try:
        return float(os.getenv(key, default))
    except (TypeError, ValueError):
        return default


def get_output_root() -> Path:
    """输出根目录，可由 B2MAPO_OUTPUT_ROOT 覆盖"""
    return Path(os.getenv("B2MAPO_OUTPUT_ROOT", str(BASE_DIR / "outputs")))


# 下层优化器配置
SCHEME_CONFIG = {
    "clip_eps": 0.2,  # 每个批次的裁剪参数 ε^{b_k}
    "learning_rate": 0.05,
    "epochs": 4,  # 每个批次的梯度上升轮数
    "distill_period": 5,  # 蒸馏周期 K（轮）
    "distill_coef": 1.0,
    "distill_lr": 1.0,
    "distill_steps": 10,
    "lam": 0.95,
    "gamma": 0.99,
    "n_episodes": 16,
    "horizon": 64,
    "normalize_advantages": True,  # 仅训练模式
    "independent_update": True,  # π_ind 同步做 MAPPO 更新
    "conditioned_critic": True,  # 训练模式下 V 以前序批次动作为条件
    "guard_backtracks": 12,  # 预言机模式下的回溯次数
}

# 上层调度器配置
SCHEDULER_CONFIG = {
    "period": 16,  # 重新规划周期 T
    "window": 4,  # 轨迹特征窗口 W
    "d_k": 8,
    "clip_eps": 0.2,
    "kl_coef": 0.1,  # c1
    "learning_rate": 0.05,
    "critic_lr": 0.5,
    "epochs": 4,
    "init_scale": 0.1,
}

# 验证套件配置
VERIFY_CONFIG = {
    "tv_product_trials": 10000,
    "advantage_bound_trials": 1000,
    "discrepancy_trials": 500,
    "discrepancy_horizon": 8,
    "series_trials": 200,
    "series_horizon": 400,
    "difference_trials": 200,
    "single_batch_chains": 200,
    "joint_chains": 200,
    "tightening_chains": 100,
    "mappo_trials": 500,
    "happo_trials": 200,
    "identity_trials": 100,
    "distill_seeds": 5,
    "arith_tol": 1e-12,  # 纯算术恒等式
    "solver_tol": 1e-9,  # 线性求解相关量
}

# 计时基准配置
BENCH_CONFIG = {
    "warmup_rounds": 5,
    "measured_rounds": 50,
    "decision_steps": 2000,
    "n_agents": 8,
}

# 精确表缓存配置
ORACLE_CACHE_CONFIG = {
    "enabled": True,
    "max_size": 512,  # 最大条目数
    "stats_enabled": True,
}


def get_scheme_config() -> dict:
    """获取优化器默认配置，支持环境变量覆盖"""
    config = SCHEME_CONFIG.copy()
    config.update(
        {
            "clip_eps": _get_float_env("B2MAPO_CLIP_EPS", config["clip_eps"]),
            "learning_rate": _get_float_env(
                "B2MAPO_LEARNING_RATE", config["learning_rate"]
            ),
            "epochs": _get_int_env("B2MAPO_EPOCHS", config["epochs"]),
            "distill_period": _get_int_env(
                "B2MAPO_DISTILL_PERIOD", config["distill_period"]
            ),
            "n_episodes": _get_int_env("B2MAPO_N_EPISODES", config["n_episodes"]),
            "horizon": _get_int_env("B2MAPO_HORIZON", config["horizon"]),
        }
    )
    return config


def get_scheduler_config() -> dict:
    """获取调度器配置，支持环境变量覆盖"""
    config = SCHEDULER_CONFIG.copy()
    config.update(
        {
            "period": _get_int_env("B2MAPO_PERIOD", config["period"]),
            "window": _get_int_env("B2MAPO_WINDOW", config["window"]),
        }
    )
    return config


def get_verify_config() -> dict:
    """获取验证配置，支持环境变量覆盖"""
    config = VERIFY_CONFIG.copy()
    for key in list(config):
        if key.endswith("_trials") or key.endswith("_chains"):
            config[key] = _get_int_env(f"B2MAPO_{key.upper()}", config[key])
    return config


def get_bench_config() -> dict:
    """获取基准配置"""
    config = BENCH_CONFIG.copy()
    config.update(
        {
            "warmup_rounds": _get_int_env(
                "B2MAPO_WARMUP_ROUNDS", config["warmup_rounds"]
            ),
            "measured_rounds": _get_int_env(
                "B2MAPO_MEASURED_ROUNDS", config["measured_rounds"]
            ),
        }
    )
    return config


def get_oracle_cache_config() -> dict:
    """获取精确表缓存配置"""
    config = ORACLE_CACHE_CONFIG.copy()
    config.update(
        {
            "enabled": _get_bool_env("B2MAPO_CACHE_ENABLED", config["enabled"]),
            "max_size": _get_int_env("B2MAPO_CACHE_MAX_SIZE", config["max_size"]),
        }
    )
    return config
