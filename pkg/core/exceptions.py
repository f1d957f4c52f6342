"""
异常类型
"""


class B2MAPOError(Exception):
    """所有库内错误的基类"""

    error_type = "error"


class InputError(B2MAPOError, ValueError):
    """输入错误：索引越界、配置非法、上下文不匹配"""

    error_type = "input_error"


class SizeError(InputError):
    """规模超限"""

    error_type = "size_error"


class NumericDomainError(B2MAPOError, ArithmeticError):
    """数值域错误：零概率、绝对连续性破坏、非有限值"""

    error_type = "numeric_domain_error"


class InternalError(B2MAPOError, RuntimeError):
    """内部错误：不应出现的状态"""

    error_type = "internal_error"


class ResultIOError(B2MAPOError, OSError):
    """结果文件读写错误"""

    error_type = "io_error"
