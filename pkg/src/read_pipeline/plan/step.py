from dataclasses import dataclass, field
from typing import Any, Callable, Dict


@dataclass
class Step:
    """ One call of a plan: a pipeline command's API method and its keyword arguments. """
    section_name: str
    fqn: Callable
    arguments: Dict[str, Any] = field(default_factory=dict)
    is_done: bool = False

    @property
    def is_bound(self):
        return hasattr(self.fqn, '__self__')

    @property
    def qualified_name(self):
        if self.is_bound:
            return "{}.{}.{}".format(self.fqn.__module__, self.fqn.__self__.__class__.__name__, self.fqn.__name__)
        return "{}.{}".format(self.fqn.__module__, self.fqn.__name__)

    def to_dict(self):
        return {
            'section_name': self.section_name,
            'function_name': self.fqn.__name__,
            'function_class_name': self.fqn.__self__.__class__.__name__ if self.is_bound else None,
            'function_module_name': self.fqn.__module__,
            'arguments': self.arguments,
            'is_done': self.is_done
        }
