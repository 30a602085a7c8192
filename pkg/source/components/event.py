from typing import Callable


class Event(object):
    """
    Observer list used for progress notifications (finished epochs, evaluated search candidates,
    completed pipeline stages). Handlers are attached with `+=`, detached with `-=` and all of them
    are called, in subscription order, when the event itself is called.
    """

    def __init__(self):
        self.__handlers: list[Callable] = []

    def __iadd__(self, handler: Callable):
        """
        Subscribes a handler.

        Parameters:
            handler (Callable): Function called with the event arguments.

        Returns:
            Event: The same event.
        """
        self.__handlers.append(handler)
        return self

    def __isub__(self, handler: Callable):
        """
        Unsubscribes a previously added handler.

        Parameters:
            handler (Callable): Function to remove.

        Returns:
            Event: The same event.

        Raises:
            ValueError: If the handler was never subscribed.
        """
        self.__handlers.remove(handler)
        return self

    def __len__(self) -> int:
        return len(self.__handlers)

    def __call__(self, *args, **kwargs) -> None:
        for handler in list(self.__handlers):
            handler(*args, **kwargs)
